#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bast/attack.hpp"
#include "bast/model.hpp"

namespace bast {

// Ordered attack ensemble: the first num_easy members form the
// easy-to-attack group, the rest the robust group. Weights are per-member
// and normalized within each group.
struct EnsembleSpec {
    std::vector<const Classifier*> members;
    std::vector<double> weights;
    std::size_t num_easy = 0;

    std::size_t num_robust() const { return members.size() - num_easy; }
};

struct BastSchedule {
    int m = 2;  // targeted repetitions per outer iteration (easy group)
    int n = 1;  // non-targeted repetitions per outer iteration (robust group)
    int outer_iterations = 0;  // 0 means ceil(200 / (m + n))
    // Algorithm order runs the non-targeted phase first; the prose says
    // targeted first. Default follows the algorithm listing.
    bool nontargeted_first = true;

    int resolved_iterations() const {
        if (outer_iterations > 0) return outer_iterations;
        return (200 + m + n - 1) / (m + n);
    }
};

struct AttackTask {
    Tensor x;
    int y_true = 0;
    int y_target = 0;
    AttackBudget budget;  // iterations = outer iteration count T, alpha = eps/T
    DiversityConfig diversity;
    SmoothingKernel kernel;
    std::uint64_t seed = 0;
};

// Weighted ensemble-in-loss gradient: grad_x of sum_i w_i * J_i(x, y).
Tensor ensemble_loss_grad(const std::vector<const Classifier*>& members,
                          const std::vector<double>& weights, const Tensor& x, int y);

// One term of an inner step's combined objective gradient. The sign of the
// weight encodes the attack goal: positive for ascent on a true-label loss
// (non-targeted), negative for descent on a target-label loss (targeted).
// Folding the sign into the accumulated gradient lets phases with opposite
// goals share one momentum buffer without cancelling each other's updates.
struct GradTerm {
    const Classifier* model;
    double weight;
    int label;
};

struct InnerStep {
    std::vector<GradTerm> terms;
};

// Generic engine: T outer iterations, each executing the inner steps in
// order with shared momentum and iterate; diversity is drawn before every
// inner gradient and the iterate always moves along the accumulated
// momentum. All five strategies below are instances of this.
Tensor scheduled_attack(const AttackTask& task, const std::vector<InnerStep>& inner_steps);

// Targeted attack on the bagged (equal-direction) ensemble loss over all
// members, one step per iteration.
Tensor bagging_attack(const AttackTask& task, const EnsembleSpec& spec);

// Targeted attack stepping against each member in order, sharing momentum
// and the evolving iterate.
Tensor stacking_attack(const AttackTask& task, const EnsembleSpec& spec);

// Bagging-and-stacking: per outer iteration, n non-targeted steps on the
// robust group's bagged loss and m targeted steps on the easy group's,
// momentum shared across phases.
Tensor bast_attack(const AttackTask& task, const EnsembleSpec& spec, const BastSchedule& schedule);

// Single bagged gradient per iteration combining descent on the easy
// group's target-label loss with ascent on the robust group's true-label
// loss.
Tensor without_stacking_attack(const AttackTask& task, const EnsembleSpec& spec);

// Sequential per-member steps: non-targeted for each robust member, then
// targeted for each easy member.
Tensor without_bagging_attack(const AttackTask& task, const EnsembleSpec& spec);

}  // namespace bast
