#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bast/tensor.hpp"

namespace bast {

enum class LayerKind : std::uint8_t {
    Dense = 0,
    Conv3x3 = 1,
    Relu = 2,
    Flatten = 3,
    AvgPool2x2 = 4,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    // Dense: weight [out,in], bias [out].
    // Conv3x3: weight [F,C,3,3], bias [F]. Same padding, stride 1.
    // Relu / Flatten / AvgPool2x2 carry no parameters.
    Tensor weight;
    Tensor bias;

    bool has_params() const {
        return kind == LayerKind::Dense || kind == LayerKind::Conv3x3;
    }
};

enum class RobustnessTag { Easy, Robust };

struct TrainConfig {
    int epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    bool adversarial = false;    // augment each batch with FGSM examples
    double adv_epsilon = 16.0 / 255.0;
};

struct Dataset {
    std::vector<Tensor> images;  // each [C,H,W], pixels in [0,1]
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return images.size(); }
};

// Fixed-architecture classifier. Immutable once trained or loaded; forward
// and input_gradient are pure and safe to call concurrently. Every input
// gradient query bumps an atomic counter so the harness can prove black-box
// models were never consulted during attack generation.
class Classifier {
public:
    Classifier(std::string id, std::vector<std::size_t> input_shape,
               std::vector<LayerSpec> layers, int num_classes,
               RobustnessTag tag = RobustnessTag::Easy);

    const std::string& id() const { return id_; }
    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    int num_classes() const { return num_classes_; }
    RobustnessTag robustness_tag() const { return tag_; }
    void set_robustness_tag(RobustnessTag tag) { tag_ = tag; }

    Tensor forward(const Tensor& image) const;
    int predict(const Tensor& image) const;

    // Analytic d(softmax CE)/d(input) via the backward pass.
    Tensor input_gradient(const Tensor& image, int label) const;

    std::uint64_t gradient_calls() const { return grad_calls_->load(); }
    void reset_gradient_calls() const { grad_calls_->store(0); }

private:
    friend struct TrainAccess;

    std::string id_;
    std::vector<std::size_t> input_shape_;
    std::vector<LayerSpec> layers_;
    int num_classes_;
    RobustnessTag tag_;
    // shared_ptr so Classifier stays copyable while the counter stays atomic
    std::shared_ptr<std::atomic<std::uint64_t>> grad_calls_;
};

// flatten -> dense(hidden) -> relu -> dense(K)
Classifier make_mlp(const std::string& id, std::vector<std::size_t> input_shape,
                    std::size_t hidden, int num_classes, std::uint64_t seed);

// conv3x3(filters) -> relu -> avgpool2x2 -> flatten -> dense(K)
Classifier make_cnn(const std::string& id, std::vector<std::size_t> input_shape,
                    std::size_t filters, int num_classes, std::uint64_t seed);

struct TrainResult {
    Classifier model;
    std::vector<double> epoch_losses;  // mean training loss per epoch
};

// Minibatch SGD on softmax cross-entropy. With cfg.adversarial, each batch
// is augmented with FGSM examples at cfg.adv_epsilon generated against the
// current weights. Deterministic given cfg.seed.
TrainResult train(const Classifier& init, const Dataset& data, const TrainConfig& cfg);

double accuracy(const Classifier& model, const Dataset& data);

// "BASTMDL1" weight files: magic, version byte, then little-endian layer
// records. Round trips are bit-identical.
void save_weights(const Classifier& model, const std::string& path);
Classifier load_weights(const std::string& path);

}  // namespace bast
