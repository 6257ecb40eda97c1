#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bast {

// Dense row-major tensor of doubles. Shapes are small (desk-scale images,
// gradients, weights), so everything lives in a flat std::vector.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor full(std::vector<std::size_t> s, double value);

    std::size_t size() const { return data.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // [C,H,W] indexing
    double& at3(std::size_t c, std::size_t h, std::size_t w);
    double at3(std::size_t c, std::size_t h, std::size_t w) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

double linf_distance(const Tensor& a, const Tensor& b);
double l1_norm(const Tensor& t);
double stddev(const Tensor& t);  // population std

// Per-channel 2-D cross-correlation with zero padding, output shape equals
// input shape. Kernel extents must be odd. No kernel flip: every kernel we
// use is a symmetric Gaussian, so correlation and convolution coincide.
Tensor conv2d_same(const Tensor& input, const Tensor& kernel);

struct CrossEntropyResult {
    double loss;
    Tensor grad_logits;
};

// loss = -log softmax(logits)[label], max-subtracted for stability.
// grad_logits = softmax(logits) - one_hot(label).
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, int label);

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace bast
