#include "bast/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

namespace bast {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::Relu: return "relu";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::AvgPool2x2: return "avgpool2x2";
    }
    return "?";
}

namespace {

Tensor layer_forward(const LayerSpec& layer, const Tensor& x) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            if (x.shape.size() != 1)
                throw std::runtime_error("dense: expected flat input, got " + shape_str(x.shape));
            std::size_t out = layer.weight.shape[0], in = layer.weight.shape[1];
            if (x.size() != in)
                throw std::runtime_error("dense: input size " + std::to_string(x.size()) +
                                         " != " + std::to_string(in));
            Tensor y = Tensor::zeros({out});
            for (std::size_t o = 0; o < out; ++o) {
                double acc = layer.bias[o];
                const double* w = &layer.weight.data[o * in];
                for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
                y[o] = acc;
            }
            return y;
        }
        case LayerKind::Conv3x3: {
            if (x.shape.size() != 3)
                throw std::runtime_error("conv3x3: expected [C,H,W], got " + shape_str(x.shape));
            std::size_t F = layer.weight.shape[0], C = layer.weight.shape[1];
            if (x.shape[0] != C)
                throw std::runtime_error("conv3x3: channel mismatch");
            std::size_t H = x.shape[1], W = x.shape[2];
            Tensor y = Tensor::zeros({F, H, W});
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t i = 0; i < H; ++i) {
                    for (std::size_t j = 0; j < W; ++j) {
                        double acc = layer.bias[f];
                        for (std::size_t c = 0; c < C; ++c) {
                            for (int u = -1; u <= 1; ++u) {
                                long ii = static_cast<long>(i) + u;
                                if (ii < 0 || ii >= static_cast<long>(H)) continue;
                                for (int v = -1; v <= 1; ++v) {
                                    long jj = static_cast<long>(j) + v;
                                    if (jj < 0 || jj >= static_cast<long>(W)) continue;
                                    acc += layer.weight.data[((f * C + c) * 3 +
                                                              static_cast<std::size_t>(u + 1)) * 3 +
                                                             static_cast<std::size_t>(v + 1)] *
                                           x.at3(c, static_cast<std::size_t>(ii),
                                                 static_cast<std::size_t>(jj));
                                }
                            }
                        }
                        y.at3(f, i, j) = acc;
                    }
                }
            }
            return y;
        }
        case LayerKind::Relu: {
            Tensor y = x;
            for (double& v : y.data) v = std::max(0.0, v);
            return y;
        }
        case LayerKind::Flatten:
            return Tensor({x.size()}, x.data);
        case LayerKind::AvgPool2x2: {
            if (x.shape.size() != 3 || x.shape[1] % 2 != 0 || x.shape[2] % 2 != 0)
                throw std::runtime_error("avgpool2x2: expected [C,2h,2w], got " + shape_str(x.shape));
            std::size_t C = x.shape[0], H = x.shape[1] / 2, W = x.shape[2] / 2;
            Tensor y = Tensor::zeros({C, H, W});
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        y.at3(c, i, j) = 0.25 * (x.at3(c, 2 * i, 2 * j) + x.at3(c, 2 * i, 2 * j + 1) +
                                                 x.at3(c, 2 * i + 1, 2 * j) + x.at3(c, 2 * i + 1, 2 * j + 1));
            return y;
        }
    }
    throw std::runtime_error("unknown layer kind");
}

// Backward through one layer: given upstream delta w.r.t. the layer output,
// produce delta w.r.t. the layer input and (optionally) parameter grads.
Tensor layer_backward(const LayerSpec& layer, const Tensor& x, const Tensor& delta,
                      Tensor* dweight, Tensor* dbias) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            std::size_t out = layer.weight.shape[0], in = layer.weight.shape[1];
            Tensor dx = Tensor::zeros(x.shape);
            for (std::size_t o = 0; o < out; ++o) {
                const double* w = &layer.weight.data[o * in];
                double d = delta[o];
                for (std::size_t i = 0; i < in; ++i) dx[i] += w[i] * d;
            }
            if (dweight) {
                for (std::size_t o = 0; o < out; ++o) {
                    double d = delta[o];
                    double* dw = &dweight->data[o * in];
                    for (std::size_t i = 0; i < in; ++i) dw[i] += d * x[i];
                    dbias->data[o] += d;
                }
            }
            return dx;
        }
        case LayerKind::Conv3x3: {
            std::size_t F = layer.weight.shape[0], C = layer.weight.shape[1];
            std::size_t H = x.shape[1], W = x.shape[2];
            Tensor dx = Tensor::zeros(x.shape);
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t i = 0; i < H; ++i) {
                    for (std::size_t j = 0; j < W; ++j) {
                        double d = delta.at3(f, i, j);
                        if (dbias) dbias->data[f] += d;
                        for (std::size_t c = 0; c < C; ++c) {
                            for (int u = -1; u <= 1; ++u) {
                                long ii = static_cast<long>(i) + u;
                                if (ii < 0 || ii >= static_cast<long>(H)) continue;
                                for (int v = -1; v <= 1; ++v) {
                                    long jj = static_cast<long>(j) + v;
                                    if (jj < 0 || jj >= static_cast<long>(W)) continue;
                                    std::size_t widx = ((f * C + c) * 3 +
                                                        static_cast<std::size_t>(u + 1)) * 3 +
                                                       static_cast<std::size_t>(v + 1);
                                    dx.at3(c, static_cast<std::size_t>(ii),
                                           static_cast<std::size_t>(jj)) += layer.weight.data[widx] * d;
                                    if (dweight)
                                        dweight->data[widx] += d * x.at3(c, static_cast<std::size_t>(ii),
                                                                         static_cast<std::size_t>(jj));
                                }
                            }
                        }
                    }
                }
            }
            return dx;
        }
        case LayerKind::Relu: {
            Tensor dx = delta;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] <= 0.0) dx[i] = 0.0;
            return dx;
        }
        case LayerKind::Flatten:
            return Tensor(x.shape, delta.data);
        case LayerKind::AvgPool2x2: {
            std::size_t C = x.shape[0], H = x.shape[1] / 2, W = x.shape[2] / 2;
            Tensor dx = Tensor::zeros(x.shape);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j) {
                        double d = 0.25 * delta.at3(c, i, j);
                        dx.at3(c, 2 * i, 2 * j) = d;
                        dx.at3(c, 2 * i, 2 * j + 1) = d;
                        dx.at3(c, 2 * i + 1, 2 * j) = d;
                        dx.at3(c, 2 * i + 1, 2 * j + 1) = d;
                    }
            return dx;
        }
    }
    throw std::runtime_error("unknown layer kind");
}

struct BackpropResult {
    double loss;
    Tensor input_grad;
};

BackpropResult backprop(const std::vector<LayerSpec>& layers, const Tensor& image, int label,
                        std::vector<Tensor>* dweights, std::vector<Tensor>* dbiases) {
    std::vector<Tensor> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(image);
    for (const LayerSpec& layer : layers)
        acts.push_back(layer_forward(layer, acts.back()));

    auto ce = softmax_cross_entropy(acts.back(), label);
    Tensor delta = std::move(ce.grad_logits);
    for (std::size_t li = layers.size(); li-- > 0;) {
        Tensor* dw = nullptr;
        Tensor* db = nullptr;
        if (dweights && layers[li].has_params()) {
            dw = &(*dweights)[li];
            db = &(*dbiases)[li];
        }
        delta = layer_backward(layers[li], acts[li], delta, dw, db);
    }
    return {ce.loss, std::move(delta)};
}

}  // namespace

Classifier::Classifier(std::string id, std::vector<std::size_t> input_shape,
                       std::vector<LayerSpec> layers, int num_classes, RobustnessTag tag)
    : id_(std::move(id)),
      input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      num_classes_(num_classes),
      tag_(tag),
      grad_calls_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    // shape-check the stack end to end
    Tensor probe = Tensor::zeros(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            probe = layer_forward(layers_[i], probe);
        } catch (const std::exception& e) {
            throw std::runtime_error("classifier '" + id_ + "': layer " + std::to_string(i) +
                                     " (" + layer_kind_name(layers_[i].kind) + "): " + e.what());
        }
    }
    if (probe.shape.size() != 1 || probe.size() != static_cast<std::size_t>(num_classes_))
        throw std::runtime_error("classifier '" + id_ + "': stack yields " + shape_str(probe.shape) +
                                 ", expected [" + std::to_string(num_classes_) + "] logits");
}

Tensor Classifier::forward(const Tensor& image) const {
    if (image.shape != input_shape_)
        throw std::invalid_argument("classifier '" + id_ + "': input shape " + shape_str(image.shape) +
                                    " != expected " + shape_str(input_shape_));
    Tensor a = image;
    for (const LayerSpec& layer : layers_) a = layer_forward(layer, a);
    return a;
}

int Classifier::predict(const Tensor& image) const {
    Tensor logits = forward(image);
    return static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) -
                            logits.data.begin());
}

Tensor Classifier::input_gradient(const Tensor& image, int label) const {
    if (image.shape != input_shape_)
        throw std::invalid_argument("classifier '" + id_ + "': input shape " + shape_str(image.shape) +
                                    " != expected " + shape_str(input_shape_));
    grad_calls_->fetch_add(1);
    return backprop(layers_, image, label, nullptr, nullptr).input_grad;
}

namespace {

Tensor random_weights(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor w = Tensor::zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& v : w.data) v = dist(rng);
    return w;
}

}  // namespace

Classifier make_mlp(const std::string& id, std::vector<std::size_t> input_shape,
                    std::size_t hidden, int num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t in = shape_size(input_shape);
    std::vector<LayerSpec> layers;
    layers.push_back({LayerKind::Flatten, {}, {}});
    layers.push_back({LayerKind::Dense, random_weights({hidden, in}, in, rng),
                      Tensor::zeros({hidden})});
    layers.push_back({LayerKind::Relu, {}, {}});
    layers.push_back({LayerKind::Dense,
                      random_weights({static_cast<std::size_t>(num_classes), hidden}, hidden, rng),
                      Tensor::zeros({static_cast<std::size_t>(num_classes)})});
    return Classifier(id, std::move(input_shape), std::move(layers), num_classes);
}

Classifier make_cnn(const std::string& id, std::vector<std::size_t> input_shape,
                    std::size_t filters, int num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t C = input_shape[0], H = input_shape[1], W = input_shape[2];
    std::size_t flat = filters * (H / 2) * (W / 2);
    std::vector<LayerSpec> layers;
    layers.push_back({LayerKind::Conv3x3, random_weights({filters, C, 3, 3}, C * 9, rng),
                      Tensor::zeros({filters})});
    layers.push_back({LayerKind::Relu, {}, {}});
    layers.push_back({LayerKind::AvgPool2x2, {}, {}});
    layers.push_back({LayerKind::Flatten, {}, {}});
    layers.push_back({LayerKind::Dense,
                      random_weights({static_cast<std::size_t>(num_classes), flat}, flat, rng),
                      Tensor::zeros({static_cast<std::size_t>(num_classes)})});
    return Classifier(id, std::move(input_shape), std::move(layers), num_classes);
}

struct TrainAccess {
    static std::vector<LayerSpec>& layers(Classifier& c) { return c.layers_; }
};

TrainResult train(const Classifier& init, const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    for (int y : data.labels)
        if (y < 0 || y >= init.num_classes())
            throw std::invalid_argument("train: label " + std::to_string(y) + " out of range");

    Classifier model = init;
    std::vector<LayerSpec>& layers = TrainAccess::layers(model);
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, data.size());

            std::vector<Tensor> dweights(layers.size()), dbiases(layers.size());
            for (std::size_t li = 0; li < layers.size(); ++li) {
                if (layers[li].has_params()) {
                    dweights[li] = Tensor::zeros(layers[li].weight.shape);
                    dbiases[li] = Tensor::zeros(layers[li].bias.shape);
                }
            }

            std::size_t n_examples = 0;
            for (std::size_t k = start; k < end; ++k) {
                const Tensor& x = data.images[order[k]];
                int y = data.labels[order[k]];
                auto r = backprop(layers, x, y, &dweights, &dbiases);
                loss_sum += r.loss;
                ++loss_count;
                ++n_examples;

                if (cfg.adversarial) {
                    // FGSM at adv_epsilon against the current weights
                    Tensor adv = x;
                    for (std::size_t i = 0; i < adv.size(); ++i) {
                        double g = r.input_grad[i];
                        double s = (g > 0.0) ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
                        adv[i] = std::clamp(adv[i] + cfg.adv_epsilon * s, 0.0, 1.0);
                    }
                    backprop(layers, adv, y, &dweights, &dbiases);
                    ++n_examples;
                }
            }

            double step = cfg.learning_rate / static_cast<double>(n_examples);
            for (std::size_t li = 0; li < layers.size(); ++li) {
                if (!layers[li].has_params()) continue;
                for (std::size_t i = 0; i < layers[li].weight.size(); ++i)
                    layers[li].weight[i] -= step * dweights[li][i];
                for (std::size_t i = 0; i < layers[li].bias.size(); ++i)
                    layers[li].bias[i] -= step * dbiases[li][i];
            }
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(loss_count));
    }
    return {std::move(model), std::move(epoch_losses)};
}

double accuracy(const Classifier& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (model.predict(data.images[i]) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

constexpr char kModelMagic[8] = {'B', 'A', 'S', 'T', 'M', 'D', 'L', '1'};
constexpr std::uint8_t kModelVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("weight file truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_tensor(std::ostream& out, const Tensor& t) {
    out.put(static_cast<char>(t.shape.size()));
    for (std::size_t d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in, const std::string& what) {
    int ndim = in.get();
    if (ndim == EOF) throw std::runtime_error("weight file truncated while reading " + what);
    std::vector<std::size_t> shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(read_u32(in, what + " shape"));
    std::vector<double> data(shape_size(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
        throw std::runtime_error("weight file truncated while reading " + what + " data");
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_weights(const Classifier& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kModelMagic, 8);
    out.put(static_cast<char>(kModelVersion));
    write_u32(out, static_cast<std::uint32_t>(model.id().size()));
    out.write(model.id().data(), static_cast<std::streamsize>(model.id().size()));
    out.put(model.robustness_tag() == RobustnessTag::Robust ? 1 : 0);
    write_u32(out, static_cast<std::uint32_t>(model.num_classes()));
    out.put(static_cast<char>(model.input_shape().size()));
    for (std::size_t d : model.input_shape()) write_u32(out, static_cast<std::uint32_t>(d));
    write_u32(out, static_cast<std::uint32_t>(model.layers().size()));
    for (const LayerSpec& layer : model.layers()) {
        out.put(static_cast<char>(layer.kind));
        if (layer.has_params()) {
            write_tensor(out, layer.weight);
            write_tensor(out, layer.bias);
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Classifier load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0)
        throw std::runtime_error("bad magic in weight file: " + path);
    int version = in.get();
    if (version != kModelVersion)
        throw std::runtime_error("unsupported weight file version " + std::to_string(version));
    std::uint32_t id_len = read_u32(in, "id length");
    std::string id(id_len, '\0');
    if (!in.read(id.data(), id_len)) throw std::runtime_error("weight file truncated while reading id");
    int tag_byte = in.get();
    if (tag_byte == EOF) throw std::runtime_error("weight file truncated while reading tag");
    std::uint32_t num_classes = read_u32(in, "num_classes");
    int ndim = in.get();
    if (ndim == EOF) throw std::runtime_error("weight file truncated while reading input shape");
    std::vector<std::size_t> input_shape;
    for (int i = 0; i < ndim; ++i) input_shape.push_back(read_u32(in, "input shape"));
    std::uint32_t n_layers = read_u32(in, "layer count");

    std::vector<LayerSpec> layers;
    for (std::uint32_t li = 0; li < n_layers; ++li) {
        int kind_byte = in.get();
        if (kind_byte == EOF)
            throw std::runtime_error("weight file truncated at layer " + std::to_string(li));
        if (kind_byte < 0 || kind_byte > 4)
            throw std::runtime_error("bad layer kind " + std::to_string(kind_byte) + " at layer " +
                                     std::to_string(li));
        LayerSpec layer;
        layer.kind = static_cast<LayerKind>(kind_byte);
        if (layer.has_params()) {
            std::string where = "layer " + std::to_string(li) + " (" +
                                layer_kind_name(layer.kind) + ")";
            layer.weight = read_tensor(in, where + " weight");
            layer.bias = read_tensor(in, where + " bias");
        }
        layers.push_back(std::move(layer));
    }
    in.peek();
    if (!in.eof()) throw std::runtime_error("trailing bytes in weight file: " + path);

    // Classifier ctor re-validates the layer stack; a shape mismatch names
    // the offending layer there.
    return Classifier(std::move(id), std::move(input_shape), std::move(layers),
                      static_cast<int>(num_classes),
                      tag_byte ? RobustnessTag::Robust : RobustnessTag::Easy);
}

}  // namespace bast
