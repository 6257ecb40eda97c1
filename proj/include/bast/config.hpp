#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bast {

// Flat "key = value" config files, '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin = "<config>");

struct ModelRosterEntry {
    std::string id;
    std::string arch;      // mlp | cnn
    std::string group;     // easy | robust
    std::string protocol;  // whitebox | blackbox
    std::string training;  // normal | adversarial
};

struct ExperimentConfig {
    // data
    std::string data = "synthetic";  // synthetic | idx | csv
    std::string train_prefix;        // idx: <prefix>-images.idx / <prefix>-labels.idx
    std::string eval_prefix;
    std::string train_csv;
    std::string eval_csv;
    int num_classes = 16;
    std::size_t image_height = 14;
    std::size_t image_width = 14;
    std::size_t train_count = 4000;  // synthetic only
    std::size_t eval_pool = 3000;    // synthetic only

    // roster
    std::vector<ModelRosterEntry> models;
    std::string weights_dir;  // load <id>.bastmdl if present, else train and save

    // training
    int epochs = 15;
    std::size_t batch_size = 32;
    double learning_rate = 0.08;
    // robust-group models train against FGSM at a budget slightly above the
    // attack's 16/255 so their margins roughly match the evaluation ball
    double adv_epsilon = 28.0 / 255.0;
    std::size_t mlp_hidden = 64;
    std::size_t cnn_filters = 8;

    // attack
    std::string strategy = "bast";  // bagging|stacking|bast|without_stacking|without_bagging|single
    double epsilon = 16.0 / 255.0;
    int iterations = 0;  // 0 = strategy default (100, or ceil(200/(m+n)) for bast/without_bagging)
    double mu = 1.0;
    std::string update_rule = "clip-round";  // clip-round | sign
    std::string norm_mode = "std";           // std | l1
    std::string direction = "nontargeted";   // single strategy only
    int m = 2;
    int n = 1;
    bool nontargeted_first = true;

    // diversity / smoothing
    double diversity_prob = 0.5;
    double scale_min = 0.85;
    double scale_max = 1.0;
    double crop_fraction = 0.9;
    std::size_t kernel_size = 7;
    double kernel_sigma = 3.0;

    // harness
    std::size_t eval_count = 1000;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    unsigned threads = 0;  // 0 = hardware concurrency
    bool save_images = true;

    static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
    void apply_overrides(const std::map<std::string, std::string>& kv);
    void validate() const;
};

}  // namespace bast
