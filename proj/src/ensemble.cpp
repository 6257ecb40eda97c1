#include "bast/ensemble.hpp"

#include <stdexcept>

namespace bast {

Tensor ensemble_loss_grad(const std::vector<const Classifier*>& members,
                          const std::vector<double>& weights, const Tensor& x, int y) {
    if (members.empty()) throw std::invalid_argument("ensemble_loss_grad: empty member list");
    if (members.size() != weights.size())
        throw std::invalid_argument("ensemble_loss_grad: " + std::to_string(members.size()) +
                                    " members vs " + std::to_string(weights.size()) + " weights");
    Tensor grad = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < members.size(); ++i) {
        Tensor gi = members[i]->input_gradient(x, y);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += weights[i] * gi[k];
    }
    return grad;
}

Tensor scheduled_attack(const AttackTask& task, const std::vector<InnerStep>& inner_steps) {
    if (task.budget.iterations < 1)
        throw std::invalid_argument("scheduled_attack: iterations must be >= 1");
    if (inner_steps.empty()) throw std::invalid_argument("scheduled_attack: no inner steps");
    if (task.y_target == task.y_true)
        throw std::invalid_argument("scheduled_attack: y_target must differ from y_true");

    std::mt19937_64 rng(task.seed);
    MomentumState g = MomentumState::zero(task.x.shape);
    Tensor x_adv = task.x;
    for (int t = 0; t < task.budget.iterations; ++t) {
        for (const InnerStep& step : inner_steps) {
            Tensor x_div = input_diversity(x_adv, task.diversity, rng);
            Tensor grad = Tensor::zeros(task.x.shape);
            for (const GradTerm& term : step.terms) {
                Tensor gi = term.model->input_gradient(x_div, term.label);
                for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += term.weight * gi[k];
            }
            Tensor smoothed = ti_smooth(grad, task.kernel);
            g = momentum_update(g, smoothed, task.budget.mu, task.budget.norm_mode);
            AttackBudget step_budget = task.budget;
            step_budget.direction = Direction::NonTargeted;  // goal sign lives in the weights
            x_adv = apply_update(x_adv, task.x, g, step_budget);
        }
    }
    return x_adv;
}

namespace {

void check_spec(const EnsembleSpec& spec) {
    if (spec.members.empty()) throw std::invalid_argument("ensemble: no members");
    if (spec.members.size() != spec.weights.size())
        throw std::invalid_argument("ensemble: member/weight count mismatch");
    if (spec.num_easy > spec.members.size())
        throw std::invalid_argument("ensemble: num_easy exceeds member count");
}

InnerStep group_step(const EnsembleSpec& spec, std::size_t first, std::size_t count,
                     int label, double weight_sign) {
    InnerStep step;
    for (std::size_t i = first; i < first + count; ++i)
        step.terms.push_back({spec.members[i], weight_sign * spec.weights[i], label});
    return step;
}

}  // namespace

Tensor bagging_attack(const AttackTask& task, const EnsembleSpec& spec) {
    check_spec(spec);
    // bagging uses the same ensemble weight for every model
    double w = 1.0 / static_cast<double>(spec.members.size());
    InnerStep step;
    for (const Classifier* m : spec.members) step.terms.push_back({m, -w, task.y_target});
    return scheduled_attack(task, {step});
}

Tensor stacking_attack(const AttackTask& task, const EnsembleSpec& spec) {
    check_spec(spec);
    std::vector<InnerStep> steps;
    for (const Classifier* m : spec.members)
        steps.push_back({{{m, -1.0, task.y_target}}});
    return scheduled_attack(task, steps);
}

Tensor bast_attack(const AttackTask& task, const EnsembleSpec& spec, const BastSchedule& schedule) {
    check_spec(spec);
    if (schedule.m < 0 || schedule.n < 0 || schedule.m + schedule.n == 0)
        throw std::invalid_argument("bast_attack: need m + n >= 1 with m, n >= 0");
    if (schedule.n > 0 && spec.num_robust() == 0)
        throw std::invalid_argument("bast_attack: n > 0 requires a nonempty robust group");
    if (schedule.m > 0 && spec.num_easy == 0)
        throw std::invalid_argument("bast_attack: m > 0 requires a nonempty easy group");

    std::vector<InnerStep> steps;
    auto push_nontargeted = [&] {
        for (int j = 0; j < schedule.n; ++j)
            steps.push_back(
                group_step(spec, spec.num_easy, spec.num_robust(), task.y_true, 1.0));
    };
    auto push_targeted = [&] {
        for (int j = 0; j < schedule.m; ++j)
            steps.push_back(group_step(spec, 0, spec.num_easy, task.y_target, -1.0));
    };
    if (schedule.nontargeted_first) {
        push_nontargeted();
        push_targeted();
    } else {
        push_targeted();
        push_nontargeted();
    }

    AttackTask t = task;
    t.budget.iterations = schedule.resolved_iterations();
    return scheduled_attack(t, steps);
}

Tensor without_stacking_attack(const AttackTask& task, const EnsembleSpec& spec) {
    check_spec(spec);
    // one bag over all members with equal weights, as in bagging_attack;
    // only the per-member goal differs by group
    double w = 1.0 / static_cast<double>(spec.members.size());
    InnerStep step;
    for (std::size_t i = 0; i < spec.members.size(); ++i) {
        bool easy = i < spec.num_easy;
        step.terms.push_back({spec.members[i], easy ? -w : w, easy ? task.y_target : task.y_true});
    }
    return scheduled_attack(task, {step});
}

Tensor without_bagging_attack(const AttackTask& task, const EnsembleSpec& spec) {
    check_spec(spec);
    std::vector<InnerStep> steps;
    for (std::size_t i = spec.num_easy; i < spec.members.size(); ++i)
        steps.push_back({{{spec.members[i], 1.0, task.y_true}}});
    for (std::size_t i = 0; i < spec.num_easy; ++i)
        steps.push_back({{{spec.members[i], -1.0, task.y_target}}});
    return scheduled_attack(task, steps);
}

}  // namespace bast
