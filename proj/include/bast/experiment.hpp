#pragma once

#include <iosfwd>
#include <vector>

#include "bast/config.hpp"
#include "bast/dataset.hpp"
#include "bast/ensemble.hpp"
#include "bast/evaluation.hpp"

namespace bast {

struct EvalSet {
    std::vector<Tensor> images;
    std::vector<int> y_true;
    std::vector<int> y_target;

    std::size_t size() const { return images.size(); }
};

// Uniform random target label != y_true per image, from a seed-derived stream.
std::vector<int> select_targets(const std::vector<int>& y_true, int num_classes,
                                std::uint64_t seed);

// Keeps only images every given model classifies correctly. Throws if no
// image survives.
EvalSet filter_correct(const std::vector<const Classifier*>& models, const Dataset& data);

Dataset make_train_data(const ExperimentConfig& cfg);
Dataset make_eval_pool(const ExperimentConfig& cfg);

// Trains each roster model (or loads it from weights_dir) and resets
// gradient-call counters afterwards. Returned vector follows roster order.
std::vector<Classifier> prepare_models(const ExperimentConfig& cfg, const Dataset& train,
                                       std::ostream* log = nullptr);

// Correctly-classified filtering over the whitebox roster, capped at
// cfg.eval_count, plus target assignment.
EvalSet build_eval_set(const ExperimentConfig& cfg, const std::vector<Classifier>& models,
                       const Dataset& pool, std::ostream* log = nullptr);

// Whitebox members only, easy group first; equal weights within each group.
EnsembleSpec build_ensemble_spec(const ExperimentConfig& cfg,
                                 const std::vector<Classifier>& models);

// Runs cfg.strategy over every eval image; deterministic per-image RNG
// streams, parallel across images.
std::vector<Tensor> run_attack(const ExperimentConfig& cfg, const EnsembleSpec& spec,
                               const EvalSet& set);

// Verifies the black-box protocol (zero gradient calls on blackbox models)
// and scores every roster model on the adversarial set.
ScoreReport evaluate_models(const ExperimentConfig& cfg, const std::vector<Classifier>& models,
                            const EvalSet& set, const std::vector<Tensor>& adversarial);

struct RunResult {
    ScoreReport report;
    std::size_t eval_size = 0;
};

// Full pipeline: data, models, filtering, attack, evaluation, artifacts
// (report.csv, report.md, manifest.csv, adversarial tensors, PGM previews)
// under cfg.output_dir.
RunResult run_experiment(const ExperimentConfig& cfg);

// BAST (m, n) grid: (1,1) (2,1) (3,1) (5,5) (10,10), one run per combo plus
// a combined sweep.md.
void run_sweep(const ExperimentConfig& cfg);

}  // namespace bast
