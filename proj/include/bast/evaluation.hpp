#pragma once

#include <string>
#include <vector>

#include "bast/model.hpp"

namespace bast {

enum class Outcome { TargetedSuccess, NontargetedOnly, Fail };

// pred == y_target -> TargetedSuccess; pred == y_true -> Fail;
// anything else -> NontargetedOnly.
Outcome classify_outcome(int pred, int y_true, int y_target);

double outcome_value(Outcome o);  // 1, 0.5, 0

// Mean outcome value, in [0,1].
double score(const std::vector<Outcome>& outcomes);

struct ModelScore {
    std::string model_id;
    bool black_box = false;
    double nontargeted_only_rate = 0.0;  // A, percent
    double targeted_rate = 0.0;          // B, percent
    double combined_score = 0.0;         // C = B + A/2, percent
};

struct ScoreReport {
    std::vector<ModelScore> rows;
};

struct EvalModel {
    const Classifier* model;
    bool black_box;
};

// Runs clean (non-diversified) forward passes of every model on every
// adversarial example and aggregates A/B/C per model. attack_member_ids are
// the ids of the models the attack consulted; a black-box model found there
// is a protocol violation.
ScoreReport evaluate_run(const std::vector<Tensor>& adversarial,
                         const std::vector<EvalModel>& models,
                         const std::vector<int>& y_true, const std::vector<int>& y_target,
                         const std::vector<std::string>& attack_member_ids);

}  // namespace bast
