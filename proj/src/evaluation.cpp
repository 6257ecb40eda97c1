#include "bast/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace bast {

Outcome classify_outcome(int pred, int y_true, int y_target) {
    if (y_target == y_true)
        throw std::invalid_argument("classify_outcome: y_target must differ from y_true");
    if (pred == y_target) return Outcome::TargetedSuccess;
    if (pred == y_true) return Outcome::Fail;
    return Outcome::NontargetedOnly;
}

double outcome_value(Outcome o) {
    switch (o) {
        case Outcome::TargetedSuccess: return 1.0;
        case Outcome::NontargetedOnly: return 0.5;
        case Outcome::Fail: return 0.0;
    }
    return 0.0;
}

double score(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("score: empty outcome list");
    double s = 0.0;
    for (Outcome o : outcomes) s += outcome_value(o);
    return s / static_cast<double>(outcomes.size());
}

ScoreReport evaluate_run(const std::vector<Tensor>& adversarial,
                         const std::vector<EvalModel>& models,
                         const std::vector<int>& y_true, const std::vector<int>& y_target,
                         const std::vector<std::string>& attack_member_ids) {
    if (adversarial.empty()) throw std::invalid_argument("evaluate_run: empty adversarial set");
    if (adversarial.size() != y_true.size() || adversarial.size() != y_target.size())
        throw std::invalid_argument("evaluate_run: label count mismatch");

    for (const EvalModel& em : models) {
        if (!em.black_box) continue;
        if (std::find(attack_member_ids.begin(), attack_member_ids.end(), em.model->id()) !=
            attack_member_ids.end())
            throw std::runtime_error("protocol violation: black-box model '" + em.model->id() +
                                     "' appears in the attack ensemble");
    }

    ScoreReport report;
    double n = static_cast<double>(adversarial.size());
    for (const EvalModel& em : models) {
        std::size_t targeted = 0, nontargeted_only = 0;
        for (std::size_t i = 0; i < adversarial.size(); ++i) {
            Outcome o = classify_outcome(em.model->predict(adversarial[i]), y_true[i], y_target[i]);
            if (o == Outcome::TargetedSuccess) ++targeted;
            else if (o == Outcome::NontargetedOnly) ++nontargeted_only;
        }
        ModelScore row;
        row.model_id = em.model->id();
        row.black_box = em.black_box;
        row.nontargeted_only_rate = 100.0 * static_cast<double>(nontargeted_only) / n;
        row.targeted_rate = 100.0 * static_cast<double>(targeted) / n;
        row.combined_score = row.targeted_rate + row.nontargeted_only_rate / 2.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace bast
