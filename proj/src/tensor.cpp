#include "bast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bast {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
    for (std::size_t dim : shape)
        if (dim == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape));
    if (data.size() != shape_size(shape))
        throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> s, double value) {
    std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
}

double& Tensor::at3(std::size_t c, std::size_t h, std::size_t w) {
    return data[(c * shape[1] + h) * shape[2] + w];
}

double Tensor::at3(std::size_t c, std::size_t h, std::size_t w) const {
    return data[(c * shape[1] + h) * shape[2] + w];
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
}

double linf_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("linf_distance: shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double l1_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += std::fabs(v);
    return s;
}

double stddev(const Tensor& t) {
    double mean = std::accumulate(t.data.begin(), t.data.end(), 0.0) /
                  static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t.data) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(t.size()));
}

Tensor conv2d_same(const Tensor& input, const Tensor& kernel) {
    if (input.shape.size() != 3)
        throw std::invalid_argument("conv2d_same: input must be [C,H,W], got " +
                                    shape_str(input.shape));
    if (kernel.shape.size() != 2)
        throw std::invalid_argument("conv2d_same: kernel must be [kh,kw], got " +
                                    shape_str(kernel.shape));
    std::size_t kh = kernel.shape[0], kw = kernel.shape[1];
    if (kh % 2 == 0 || kw % 2 == 0)
        throw std::invalid_argument("conv2d_same: kernel extents must be odd, got " +
                                    shape_str(kernel.shape));
    if (!kernel.all_finite())
        throw std::invalid_argument("conv2d_same: kernel has non-finite entries");

    std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    long ph = static_cast<long>(kh) / 2, pw = static_cast<long>(kw) / 2;
    Tensor out = Tensor::zeros(input.shape);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                double acc = 0.0;
                for (long u = -ph; u <= ph; ++u) {
                    long ii = static_cast<long>(i) + u;
                    if (ii < 0 || ii >= static_cast<long>(H)) continue;
                    for (long v = -pw; v <= pw; ++v) {
                        long jj = static_cast<long>(j) + v;
                        if (jj < 0 || jj >= static_cast<long>(W)) continue;
                        acc += kernel.data[static_cast<std::size_t>(u + ph) * kw +
                                           static_cast<std::size_t>(v + pw)] *
                               input.at3(c, static_cast<std::size_t>(ii),
                                         static_cast<std::size_t>(jj));
                    }
                }
                out.at3(c, i, j) = acc;
            }
        }
    }
    return out;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, int label) {
    std::size_t k = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(k) + " classes");
    double max_logit = *std::max_element(logits.data.begin(), logits.data.end());
    double denom = 0.0;
    for (double v : logits.data) denom += std::exp(v - max_logit);

    CrossEntropyResult r;
    r.loss = std::log(denom) - (logits[static_cast<std::size_t>(label)] - max_logit);
    r.grad_logits = Tensor::zeros(logits.shape);
    for (std::size_t i = 0; i < k; ++i)
        r.grad_logits[i] = std::exp(logits[i] - max_logit) / denom;
    r.grad_logits[static_cast<std::size_t>(label)] -= 1.0;
    return r;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be positive");
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = probe[i];
        probe[i] = orig + h;
        double fp = f(probe);
        probe[i] = orig - h;
        double fm = f(probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace bast
