#include "bast/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace bast {

namespace {

// splitmix64; decorrelates per-image RNG streams from the base seed
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string format_rate(double v, int decimals) {
    double scale = std::pow(10.0, decimals);
    double r = std::floor(v * scale + 0.5) / scale;  // rates are nonnegative
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, r);
    return buf;
}

}  // namespace

std::vector<int> select_targets(const std::vector<int>& y_true, int num_classes,
                                std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("select_targets: need >= 2 classes");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dist(0, num_classes - 2);
    std::vector<int> targets;
    targets.reserve(y_true.size());
    for (int y : y_true) {
        int t = dist(rng);
        if (t >= y) ++t;  // skip the true class
        targets.push_back(t);
    }
    return targets;
}

EvalSet filter_correct(const std::vector<const Classifier*>& models, const Dataset& data) {
    EvalSet set;
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool all_correct = true;
        for (const Classifier* m : models)
            if (m->predict(data.images[i]) != data.labels[i]) {
                all_correct = false;
                break;
            }
        if (all_correct) {
            set.images.push_back(data.images[i]);
            set.y_true.push_back(data.labels[i]);
        }
    }
    if (set.images.empty())
        throw std::runtime_error(
            "filter_correct: no image is classified correctly by every model; train longer "
            "or enlarge the evaluation pool");
    return set;
}

Dataset make_train_data(const ExperimentConfig& cfg) {
    if (cfg.data == "synthetic")
        return make_synthetic_dataset(cfg.train_count, cfg.num_classes, cfg.image_height,
                                      cfg.image_width, cfg.seed * 2 + 1);
    if (cfg.data == "idx")
        return load_idx(cfg.train_prefix + "-images.idx", cfg.train_prefix + "-labels.idx",
                        cfg.num_classes);
    return load_csv(cfg.train_csv, 1, cfg.image_height, cfg.image_width, cfg.num_classes);
}

Dataset make_eval_pool(const ExperimentConfig& cfg) {
    if (cfg.data == "synthetic")
        return make_synthetic_dataset(cfg.eval_pool, cfg.num_classes, cfg.image_height,
                                      cfg.image_width, cfg.seed * 2 + 2);
    if (cfg.data == "idx")
        return load_idx(cfg.eval_prefix + "-images.idx", cfg.eval_prefix + "-labels.idx",
                        cfg.num_classes);
    return load_csv(cfg.eval_csv, 1, cfg.image_height, cfg.image_width, cfg.num_classes);
}

std::vector<Classifier> prepare_models(const ExperimentConfig& cfg, const Dataset& train_data,
                                       std::ostream* log) {
    std::vector<Classifier> models;
    models.reserve(cfg.models.size());
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
        const ModelRosterEntry& e = cfg.models[i];
        std::string weight_path;
        if (!cfg.weights_dir.empty()) weight_path = cfg.weights_dir + "/" + e.id + ".bastmdl";

        if (!weight_path.empty() && fs::exists(weight_path)) {
            models.push_back(load_weights(weight_path));
            if (log) *log << "loaded " << e.id << " from " << weight_path << "\n";
        } else {
            std::uint64_t model_seed = mix_seed(cfg.seed, 1000 + i);
            std::vector<std::size_t> shape{1, cfg.image_height, cfg.image_width};
            Classifier init = e.arch == "cnn"
                                  ? make_cnn(e.id, shape, cfg.cnn_filters, cfg.num_classes, model_seed)
                                  : make_mlp(e.id, shape, cfg.mlp_hidden, cfg.num_classes, model_seed);
            TrainConfig tc;
            tc.epochs = cfg.epochs;
            tc.batch_size = cfg.batch_size;
            tc.learning_rate = cfg.learning_rate;
            tc.seed = mix_seed(cfg.seed, 2000 + i);
            tc.adversarial = e.training == "adversarial";
            tc.adv_epsilon = cfg.adv_epsilon;
            Classifier trained = train(init, train_data, tc).model;
            trained.set_robustness_tag(e.group == "robust" ? RobustnessTag::Robust
                                                           : RobustnessTag::Easy);
            if (log)
                *log << "trained " << e.id << " (" << e.arch << ", " << e.training
                     << "), clean accuracy " << accuracy(trained, train_data) << "\n";
            if (!weight_path.empty()) {
                fs::create_directories(cfg.weights_dir);
                save_weights(trained, weight_path);
            }
            models.push_back(std::move(trained));
        }
    }
    for (const Classifier& m : models) m.reset_gradient_calls();
    return models;
}

EvalSet build_eval_set(const ExperimentConfig& cfg, const std::vector<Classifier>& models,
                       const Dataset& pool, std::ostream* log) {
    std::vector<const Classifier*> whitebox;
    for (std::size_t i = 0; i < models.size(); ++i)
        if (cfg.models[i].protocol == "whitebox") whitebox.push_back(&models[i]);

    EvalSet set = filter_correct(whitebox, pool);
    if (log)
        *log << "filter_correct: " << set.size() << " of " << pool.size()
             << " images survive\n";
    if (set.size() > cfg.eval_count) {
        set.images.resize(cfg.eval_count);
        set.y_true.resize(cfg.eval_count);
    }
    set.y_target = select_targets(set.y_true, cfg.num_classes, mix_seed(cfg.seed, 3000));
    return set;
}

EnsembleSpec build_ensemble_spec(const ExperimentConfig& cfg,
                                 const std::vector<Classifier>& models) {
    EnsembleSpec spec;
    std::vector<const Classifier*> robust;
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (cfg.models[i].protocol != "whitebox") continue;
        if (cfg.models[i].group == "easy") spec.members.push_back(&models[i]);
        else robust.push_back(&models[i]);
    }
    spec.num_easy = spec.members.size();
    spec.members.insert(spec.members.end(), robust.begin(), robust.end());
    spec.weights.assign(spec.members.size(), 0.0);
    for (std::size_t i = 0; i < spec.num_easy; ++i)
        spec.weights[i] = 1.0 / static_cast<double>(spec.num_easy);
    for (std::size_t i = spec.num_easy; i < spec.members.size(); ++i)
        spec.weights[i] = 1.0 / static_cast<double>(spec.num_robust());
    return spec;
}

namespace {

int default_iterations(const ExperimentConfig& cfg) {
    if (cfg.iterations > 0) return cfg.iterations;
    if (cfg.strategy == "bast" || cfg.strategy == "without_bagging") {
        // m+n inner steps per outer iteration, so ceil(200/(m+n)) iterations
        // keeps the total step budget near 200 for comparison
        BastSchedule s{cfg.m, cfg.n, 0, cfg.nontargeted_first};
        return s.resolved_iterations();
    }
    // without_stacking takes one combined step per iteration; the same
    // ceil(200/(m+n)) budget keeps it aligned with the schedule it ablates
    if (cfg.strategy == "without_stacking") {
        BastSchedule s{cfg.m, cfg.n, 0, cfg.nontargeted_first};
        return s.resolved_iterations();
    }
    return 100;  // enough for the plain ensemble attacks to converge
}

}  // namespace

std::vector<Tensor> run_attack(const ExperimentConfig& cfg, const EnsembleSpec& spec,
                               const EvalSet& set) {
    AttackBudget budget;
    budget.epsilon = cfg.epsilon;
    budget.iterations = default_iterations(cfg);
    budget.mu = cfg.mu;
    budget.update_rule = cfg.update_rule == "sign" ? UpdateRule::Sign : UpdateRule::ClipRound;
    budget.norm_mode = cfg.norm_mode == "l1" ? NormMode::L1 : NormMode::Std;
    budget.direction = cfg.direction == "targeted" ? Direction::Targeted : Direction::NonTargeted;

    DiversityConfig div;
    div.apply_probability = cfg.diversity_prob;
    div.scale_min = cfg.scale_min;
    div.scale_max = cfg.scale_max;
    div.crop_fraction = cfg.crop_fraction;

    SmoothingKernel kernel = gaussian_kernel(cfg.kernel_size, cfg.kernel_sigma);
    BastSchedule schedule{cfg.m, cfg.n, budget.iterations, cfg.nontargeted_first};

    std::vector<Tensor> adversarial(set.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= set.size()) return;
            AttackTask task;
            task.x = set.images[i];
            task.y_true = set.y_true[i];
            task.y_target = set.y_target[i];
            task.budget = budget;
            task.diversity = div;
            task.kernel = kernel;
            task.seed = mix_seed(cfg.seed, 4000 + i);

            if (cfg.strategy == "bagging") adversarial[i] = bagging_attack(task, spec);
            else if (cfg.strategy == "stacking") adversarial[i] = stacking_attack(task, spec);
            else if (cfg.strategy == "bast") adversarial[i] = bast_attack(task, spec, schedule);
            else if (cfg.strategy == "without_stacking")
                adversarial[i] = without_stacking_attack(task, spec);
            else if (cfg.strategy == "without_bagging")
                adversarial[i] = without_bagging_attack(task, spec);
            else {  // single: Algorithm-1 attack on the first ensemble member
                std::mt19937_64 rng(task.seed);
                int label = budget.direction == Direction::Targeted ? task.y_target : task.y_true;
                adversarial[i] =
                    single_model_attack(*spec.members.front(), task.x, label, budget, div, kernel, rng);
            }
        }
    };

    unsigned n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(set.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    return adversarial;
}

ScoreReport evaluate_models(const ExperimentConfig& cfg, const std::vector<Classifier>& models,
                            const EvalSet& set, const std::vector<Tensor>& adversarial) {
    std::vector<EvalModel> eval_models;
    std::vector<std::string> attack_ids;
    for (std::size_t i = 0; i < models.size(); ++i) {
        bool black = cfg.models[i].protocol == "blackbox";
        eval_models.push_back({&models[i], black});
        if (!black) attack_ids.push_back(models[i].id());
        if (black && models[i].gradient_calls() != 0)
            throw std::runtime_error("protocol violation: black-box model '" + models[i].id() +
                                     "' answered " + std::to_string(models[i].gradient_calls()) +
                                     " gradient queries during the attack");
    }
    return evaluate_run(adversarial, eval_models, set.y_true, set.y_target, attack_ids);
}

namespace {

void write_report_csv(const std::string& path, const std::string& strategy,
                      const ScoreReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "strategy,model,protocol,A,B,C\n";
    for (const ModelScore& row : report.rows)
        out << strategy << ',' << row.model_id << ',' << (row.black_box ? "black-box" : "white-box")
            << ',' << format_rate(row.nontargeted_only_rate, 1) << ','
            << format_rate(row.targeted_rate, 1) << ',' << format_rate(row.combined_score, 2)
            << '\n';
}

void write_report_md(const std::string& path, const std::string& strategy,
                     const ScoreReport& report, std::size_t eval_size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "# Attack results (" << eval_size << " images)\n\n";
    out << "Shown as A/B/C (%): A = non-targeted success only, B = targeted success, "
           "C = B + A/2. '*' marks black-box models.\n\n";
    out << "| Method |";
    for (const ModelScore& row : report.rows)
        out << ' ' << row.model_id << (row.black_box ? " *" : "") << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < report.rows.size(); ++i) out << "---|";
    out << "\n| " << strategy << " |";
    for (const ModelScore& row : report.rows)
        out << ' ' << format_rate(row.nontargeted_only_rate, 1) << '/'
            << format_rate(row.targeted_rate, 1) << '/' << format_rate(row.combined_score, 2)
            << " |";
    out << "\n";
}

void write_manifest(const std::string& path, const std::vector<Classifier>& models,
                    const EvalSet& set, const std::vector<Tensor>& adversarial) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "index,y_true,y_target";
    for (const Classifier& m : models) out << ",pred_" << m.id();
    out << ",linf\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        out << i << ',' << set.y_true[i] << ',' << set.y_target[i];
        for (const Classifier& m : models) out << ',' << m.predict(adversarial[i]);
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", linf_distance(adversarial[i], set.images[i]));
        out << ',' << buf << '\n';
    }
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    std::ofstream log(cfg.output_dir + "/run.log", std::ios::binary);
    auto log_both = [&](const std::string& msg) {
        log << msg << "\n";
        std::cout << msg << "\n";
    };

    log_both("strategy: " + cfg.strategy + ", seed: " + std::to_string(cfg.seed));
    Dataset train = make_train_data(cfg);
    Dataset pool = make_eval_pool(cfg);
    std::vector<Classifier> models = prepare_models(cfg, train, &log);
    EvalSet set = build_eval_set(cfg, models, pool, &log);
    log_both("evaluation set: " + std::to_string(set.size()) + " images");

    EnsembleSpec spec = build_ensemble_spec(cfg, models);
    std::vector<Tensor> adversarial = run_attack(cfg, spec, set);
    ScoreReport report = evaluate_models(cfg, models, set, adversarial);

    write_report_csv(cfg.output_dir + "/report.csv", cfg.strategy, report);
    write_report_md(cfg.output_dir + "/report.md", cfg.strategy, report, set.size());
    write_manifest(cfg.output_dir + "/manifest.csv", models, set, adversarial);

    if (cfg.save_images) {
        fs::create_directories(cfg.output_dir + "/adv");
        fs::create_directories(cfg.output_dir + "/previews");
        for (std::size_t i = 0; i < adversarial.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu", i);
            save_tensor_image(adversarial[i], cfg.output_dir + "/adv/" + name + ".bimg");
            save_pgm(adversarial[i], cfg.output_dir + "/previews/" + name + ".pgm");
        }
    }

    for (const ModelScore& row : report.rows)
        log_both("  " + row.model_id + (row.black_box ? " *" : "") + ": " +
                 format_rate(row.nontargeted_only_rate, 1) + "/" + format_rate(row.targeted_rate, 1) +
                 "/" + format_rate(row.combined_score, 2));
    return {std::move(report), set.size()};
}

void run_sweep(const ExperimentConfig& cfg) {
    static const std::pair<int, int> kCombos[] = {{1, 1}, {2, 1}, {3, 1}, {5, 5}, {10, 10}};
    ExperimentConfig base = cfg;
    base.strategy = "bast";
    if (base.weights_dir.empty()) base.weights_dir = cfg.output_dir + "/weights";

    std::ostringstream grid;
    grid << "# BAST (m, n) sweep\n\nShown as A/B/C (%). '*' marks black-box models.\n\n";
    bool header_done = false;
    for (auto [m, n] : kCombos) {
        ExperimentConfig combo = base;
        combo.m = m;
        combo.n = n;
        combo.iterations = 0;  // re-derive ceil(200/(m+n))
        combo.output_dir = cfg.output_dir + "/mn_" + std::to_string(m) + "_" + std::to_string(n);
        RunResult r = run_experiment(combo);
        if (!header_done) {
            grid << "| m,n |";
            for (const ModelScore& row : r.report.rows)
                grid << ' ' << row.model_id << (row.black_box ? " *" : "") << " |";
            grid << "\n|---|";
            for (std::size_t i = 0; i < r.report.rows.size(); ++i) grid << "---|";
            grid << "\n";
            header_done = true;
        }
        grid << "| m=" << m << ", n=" << n << " |";
        for (const ModelScore& row : r.report.rows)
            grid << ' ' << format_rate(row.nontargeted_only_rate, 1) << '/'
                 << format_rate(row.targeted_rate, 1) << '/' << format_rate(row.combined_score, 2)
                 << " |";
        grid << "\n";
    }
    fs::create_directories(cfg.output_dir);
    std::ofstream out(cfg.output_dir + "/sweep.md", std::ios::binary);
    out << grid.str();
}

}  // namespace bast
