#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bast/experiment.hpp"

namespace fs = std::filesystem;

namespace {

bast::ExperimentConfig load_config(const std::string& config_path,
                                   const std::vector<std::string>& overrides) {
    bast::ExperimentConfig cfg;
    if (!config_path.empty()) cfg.apply_overrides(bast::parse_config_file(config_path));
    std::string joined;
    for (const std::string& kv : overrides) joined += kv + "\n";
    if (!joined.empty()) cfg.apply_overrides(bast::parse_config_text(joined, "<command line>"));
    return cfg;
}

void add_common(CLI::App* cmd, std::string& config_path, std::vector<std::string>& overrides) {
    cmd->add_option("-c,--config", config_path, "flat key = value config file");
    cmd->add_option("-D,--set", overrides, "override a config key, e.g. -D strategy=bast");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BAST ensemble adversarial attack toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto* train_cmd = app.add_subcommand("train", "train the model roster and save weights");
    add_common(train_cmd, config_path, overrides);

    auto* attack_cmd = app.add_subcommand("attack", "generate adversarial examples only");
    add_common(attack_cmd, config_path, overrides);

    auto* eval_cmd =
        app.add_subcommand("evaluate", "score previously generated adversarial examples");
    add_common(eval_cmd, config_path, overrides);
    std::string adv_dir;
    eval_cmd->add_option("--adv-dir", adv_dir, "directory produced by 'attack'")->required();

    auto* run_cmd = app.add_subcommand("run", "full pipeline: train, attack, evaluate, report");
    add_common(run_cmd, config_path, overrides);

    auto* sweep_cmd = app.add_subcommand("sweep", "BAST (m,n) grid over the standard combos");
    add_common(sweep_cmd, config_path, overrides);

    auto* gen_cmd = app.add_subcommand("gendata", "emit a synthetic dataset as an IDX pair");
    std::string gen_prefix = "data";
    std::size_t gen_count = 1000;
    int gen_classes = 16;
    std::size_t gen_h = 14, gen_w = 14;
    std::uint64_t gen_seed = 1;
    gen_cmd->add_option("--out", gen_prefix, "output prefix (<prefix>-images.idx etc.)");
    gen_cmd->add_option("--count", gen_count, "number of images");
    gen_cmd->add_option("--classes", gen_classes, "number of classes");
    gen_cmd->add_option("--height", gen_h, "image height");
    gen_cmd->add_option("--width", gen_w, "image width");
    gen_cmd->add_option("--seed", gen_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            bast::Dataset data = bast::make_synthetic_dataset(gen_count, gen_classes, gen_h, gen_w,
                                                              gen_seed);
            bast::save_idx(data, gen_prefix + "-images.idx", gen_prefix + "-labels.idx");
            std::cout << "wrote " << data.size() << " images to " << gen_prefix << "-{images,labels}.idx\n";
            return 0;
        }

        bast::ExperimentConfig cfg = load_config(config_path, overrides);

        if (train_cmd->parsed()) {
            cfg.validate();
            if (cfg.weights_dir.empty()) cfg.weights_dir = cfg.output_dir + "/weights";
            bast::Dataset train_data = bast::make_train_data(cfg);
            bast::prepare_models(cfg, train_data, &std::cout);
            std::cout << "weights saved under " << cfg.weights_dir << "\n";
        } else if (attack_cmd->parsed()) {
            cfg.validate();
            fs::create_directories(cfg.output_dir + "/adv");
            fs::create_directories(cfg.output_dir + "/orig");
            bast::Dataset train_data = bast::make_train_data(cfg);
            bast::Dataset pool = bast::make_eval_pool(cfg);
            auto models = bast::prepare_models(cfg, train_data, &std::cout);
            bast::EvalSet set = bast::build_eval_set(cfg, models, pool, &std::cout);
            auto spec = bast::build_ensemble_spec(cfg, models);
            auto adversarial = bast::run_attack(cfg, spec, set);

            std::ofstream meta(cfg.output_dir + "/attack_meta.csv", std::ios::binary);
            meta << "index,y_true,y_target\n";
            for (std::size_t i = 0; i < set.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "%06zu", i);
                bast::save_tensor_image(adversarial[i], cfg.output_dir + "/adv/" + name + ".bimg");
                bast::save_tensor_image(set.images[i], cfg.output_dir + "/orig/" + name + ".bimg");
                meta << i << ',' << set.y_true[i] << ',' << set.y_target[i] << '\n';
            }
            std::cout << "wrote " << set.size() << " adversarial examples to " << cfg.output_dir
                      << "/adv\n";
        } else if (eval_cmd->parsed()) {
            cfg.validate();
            if (cfg.weights_dir.empty())
                throw std::runtime_error("evaluate: weights_dir must point at trained models");
            // models must come from weights_dir, never retrained here
            std::vector<bast::Classifier> models;
            for (const auto& e : cfg.models)
                models.push_back(bast::load_weights(cfg.weights_dir + "/" + e.id + ".bastmdl"));

            bast::EvalSet set;
            std::ifstream meta(adv_dir + "/attack_meta.csv");
            if (!meta) throw std::runtime_error("cannot open " + adv_dir + "/attack_meta.csv");
            std::string line;
            std::getline(meta, line);  // header
            std::vector<bast::Tensor> adversarial;
            while (std::getline(meta, line)) {
                std::size_t c1 = line.find(','), c2 = line.rfind(',');
                if (c1 == std::string::npos || c2 == c1)
                    throw std::runtime_error("bad attack_meta.csv row: " + line);
                std::string idx = line.substr(0, c1);
                set.y_true.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
                set.y_target.push_back(std::stoi(line.substr(c2 + 1)));
                char name[32];
                std::snprintf(name, sizeof name, "%06d", std::stoi(idx));
                adversarial.push_back(bast::load_tensor_image(adv_dir + "/adv/" + name + ".bimg"));
                set.images.push_back(bast::load_tensor_image(adv_dir + "/orig/" + name + ".bimg"));
            }
            auto report = bast::evaluate_models(cfg, models, set, adversarial);
            fs::create_directories(cfg.output_dir);
            // reuse the run_experiment writers via a minimal inline emit
            std::ofstream out(cfg.output_dir + "/report.csv", std::ios::binary);
            out << "strategy,model,protocol,A,B,C\n";
            for (const auto& row : report.rows) {
                char a[32], b[32], c[32];
                std::snprintf(a, sizeof a, "%.1f", row.nontargeted_only_rate);
                std::snprintf(b, sizeof b, "%.1f", row.targeted_rate);
                std::snprintf(c, sizeof c, "%.2f", row.combined_score);
                out << cfg.strategy << ',' << row.model_id << ','
                    << (row.black_box ? "black-box" : "white-box") << ',' << a << ',' << b << ','
                    << c << '\n';
                std::cout << row.model_id << ": " << a << '/' << b << '/' << c << "\n";
            }
        } else if (run_cmd->parsed()) {
            if (const char* env = std::getenv("BAST_OUTPUT_DIR")) cfg.output_dir = env;
            bast::run_experiment(cfg);
        } else if (sweep_cmd->parsed()) {
            if (const char* env = std::getenv("BAST_OUTPUT_DIR")) cfg.output_dir = env;
            bast::run_sweep(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
