#include "bast/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bast {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected 'key = value', got: " + t);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

namespace {

ModelRosterEntry parse_roster_entry(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    ModelRosterEntry e;
    if (!(in >> e.id >> e.arch >> e.group >> e.protocol))
        throw std::runtime_error(key + ": expected 'id arch group protocol [training]', got: " + value);
    if (!(in >> e.training)) e.training = e.group == "robust" ? "adversarial" : "normal";
    auto one_of = [&](const std::string& field, const std::string& v,
                      std::initializer_list<const char*> allowed) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* a) { return v == a; }))
            throw std::runtime_error(key + ": bad " + field + " '" + v + "'");
    };
    one_of("arch", e.arch, {"mlp", "cnn"});
    one_of("group", e.group, {"easy", "robust"});
    one_of("protocol", e.protocol, {"whitebox", "blackbox"});
    one_of("training", e.training, {"normal", "adversarial"});
    return e;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not a number: " + v);
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not an integer: " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config key '" + key + "': not a boolean: " + v);
}

}  // namespace

void ExperimentConfig::apply_overrides(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key.rfind("model.", 0) == 0) {
            models.push_back(parse_roster_entry(key, value));
        } else if (key == "data") data = value;
        else if (key == "train_prefix") train_prefix = value;
        else if (key == "eval_prefix") eval_prefix = value;
        else if (key == "train_csv") train_csv = value;
        else if (key == "eval_csv") eval_csv = value;
        else if (key == "num_classes") num_classes = static_cast<int>(to_int(key, value));
        else if (key == "image_height") image_height = static_cast<std::size_t>(to_int(key, value));
        else if (key == "image_width") image_width = static_cast<std::size_t>(to_int(key, value));
        else if (key == "train_count") train_count = static_cast<std::size_t>(to_int(key, value));
        else if (key == "eval_pool") eval_pool = static_cast<std::size_t>(to_int(key, value));
        else if (key == "weights_dir") weights_dir = value;
        else if (key == "epochs") epochs = static_cast<int>(to_int(key, value));
        else if (key == "batch_size") batch_size = static_cast<std::size_t>(to_int(key, value));
        else if (key == "learning_rate") learning_rate = to_double(key, value);
        else if (key == "adv_epsilon") adv_epsilon = to_double(key, value);
        else if (key == "mlp_hidden") mlp_hidden = static_cast<std::size_t>(to_int(key, value));
        else if (key == "cnn_filters") cnn_filters = static_cast<std::size_t>(to_int(key, value));
        else if (key == "strategy") strategy = value;
        else if (key == "epsilon") epsilon = to_double(key, value);
        else if (key == "iterations") iterations = static_cast<int>(to_int(key, value));
        else if (key == "mu") mu = to_double(key, value);
        else if (key == "update_rule") update_rule = value;
        else if (key == "norm_mode") norm_mode = value;
        else if (key == "direction") direction = value;
        else if (key == "m") m = static_cast<int>(to_int(key, value));
        else if (key == "n") n = static_cast<int>(to_int(key, value));
        else if (key == "nontargeted_first") nontargeted_first = to_bool(key, value);
        else if (key == "diversity_prob") diversity_prob = to_double(key, value);
        else if (key == "scale_min") scale_min = to_double(key, value);
        else if (key == "scale_max") scale_max = to_double(key, value);
        else if (key == "crop_fraction") crop_fraction = to_double(key, value);
        else if (key == "kernel_size") kernel_size = static_cast<std::size_t>(to_int(key, value));
        else if (key == "kernel_sigma") kernel_sigma = to_double(key, value);
        else if (key == "eval_count") eval_count = static_cast<std::size_t>(to_int(key, value));
        else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, value));
        else if (key == "output_dir") output_dir = value;
        else if (key == "threads") threads = static_cast<unsigned>(to_int(key, value));
        else if (key == "save_images") save_images = to_bool(key, value);
        else throw std::runtime_error("unknown config key: " + key);
    }
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
    ExperimentConfig cfg;
    cfg.apply_overrides(kv);
    return cfg;
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw std::runtime_error("config: " + msg);
    };
    require(data == "synthetic" || data == "idx" || data == "csv", "data must be synthetic|idx|csv");
    require(num_classes >= 2, "num_classes must be >= 2");
    require(epsilon > 0.0, "epsilon must be > 0");
    require(mu >= 0.0, "mu must be >= 0");
    require(update_rule == "sign" || update_rule == "clip-round",
            "update_rule must be sign|clip-round");
    require(norm_mode == "std" || norm_mode == "l1", "norm_mode must be std|l1");
    require(direction == "nontargeted" || direction == "targeted",
            "direction must be nontargeted|targeted");
    require(kernel_size % 2 == 1, "kernel_size must be odd");
    require(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0,
            "need 0 < scale_min <= scale_max <= 1");
    require(crop_fraction > 0.0 && crop_fraction <= 1.0, "crop_fraction in (0,1]");
    require(!models.empty(), "at least one model.N entry required");

    bool any_whitebox = false, any_easy_wb = false, any_robust_wb = false;
    for (const auto& e : models) {
        if (e.protocol == "whitebox") {
            any_whitebox = true;
            (e.group == "easy" ? any_easy_wb : any_robust_wb) = true;
        }
    }
    require(any_whitebox, "at least one whitebox model required");
    if (strategy == "bast" || strategy == "without_bagging")
        require(any_easy_wb && any_robust_wb,
                strategy + " needs both an easy and a robust whitebox model");
    require(strategy == "bagging" || strategy == "stacking" || strategy == "bast" ||
                strategy == "without_stacking" || strategy == "without_bagging" ||
                strategy == "single",
            "unknown strategy: " + strategy);
    require(m >= 0 && n >= 0 && m + n >= 1, "need m + n >= 1");
}

}  // namespace bast
