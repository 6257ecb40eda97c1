#include "bast/attack.hpp"

#include <algorithm>
#include <cmath>

namespace bast {

namespace {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline double round_half_away(double v) {
    return v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
}

// The clamp above can still land one ulp outside the ball (fl(x+eps) - x may
// round past eps); nudge back in so the L-inf bound holds exactly.
inline double project_ball(double v, double center, double eps) {
    while (v - center > eps) v = std::nextafter(v, center);
    while (center - v > eps) v = std::nextafter(v, center);
    return v;
}

}  // namespace

Tensor fgsm(const Classifier& model, const Tensor& x, int y, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("fgsm: epsilon must be > 0");
    Tensor grad = model.input_gradient(x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = project_ball(std::clamp(out[i] + epsilon * sign(grad[i]), 0.0, 1.0), x[i], epsilon);
    return out;
}

SmoothingKernel gaussian_kernel(std::size_t size, double sigma) {
    if (size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    Tensor w = Tensor::zeros({size, size});
    long r = static_cast<long>(size) / 2;
    double sum = 0.0;
    for (long i = -r; i <= r; ++i) {
        for (long j = -r; j <= r; ++j) {
            double v = std::exp(-(static_cast<double>(i * i + j * j)) / (2.0 * sigma * sigma));
            w.data[static_cast<std::size_t>(i + r) * size + static_cast<std::size_t>(j + r)] = v;
            sum += v;
        }
    }
    for (double& v : w.data) v /= sum;
    return {std::move(w), sigma};
}

Tensor ti_smooth(const Tensor& grad, const SmoothingKernel& kernel) {
    return conv2d_same(grad, kernel.weights);
}

namespace {

Tensor nearest_resize(const Tensor& x, std::size_t new_h, std::size_t new_w) {
    std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    if (new_h == H && new_w == W) return x;
    Tensor out = Tensor::zeros({C, new_h, new_w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < new_h; ++i) {
            std::size_t si = std::min(H - 1, static_cast<std::size_t>(
                                                 (static_cast<double>(i) + 0.5) *
                                                 static_cast<double>(H) / static_cast<double>(new_h)));
            for (std::size_t j = 0; j < new_w; ++j) {
                std::size_t sj = std::min(W - 1, static_cast<std::size_t>(
                                                     (static_cast<double>(j) + 0.5) *
                                                     static_cast<double>(W) / static_cast<double>(new_w)));
                out.at3(c, i, j) = x.at3(c, si, sj);
            }
        }
    return out;
}

// Place src into a zero canvas of shape [C,H,W] at (oy,ox).
Tensor pad_to(const Tensor& src, std::size_t H, std::size_t W, std::size_t oy, std::size_t ox) {
    std::size_t C = src.shape[0];
    Tensor out = Tensor::zeros({C, H, W});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < src.shape[1]; ++i)
            for (std::size_t j = 0; j < src.shape[2]; ++j)
                out.at3(c, i + oy, j + ox) = src.at3(c, i, j);
    return out;
}

std::size_t draw_offset(std::mt19937_64& rng, std::size_t max_inclusive) {
    if (max_inclusive == 0) return 0;
    return std::uniform_int_distribution<std::size_t>(0, max_inclusive)(rng);
}

}  // namespace

Tensor input_diversity(const Tensor& x, const DiversityConfig& cfg, std::mt19937_64& rng) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u >= cfg.apply_probability) return x;

    std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    (void)C;

    // random downscale, zero-pad back at a random offset
    double s = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
    auto scaled_extent = [s](std::size_t e) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(s * static_cast<double>(e))));
    };
    std::size_t nh = std::min(H, scaled_extent(H)), nw = std::min(W, scaled_extent(W));
    Tensor scaled = nearest_resize(x, nh, nw);
    std::size_t oy = draw_offset(rng, H - nh);
    std::size_t ox = draw_offset(rng, W - nw);
    Tensor padded = (nh == H && nw == W && oy == 0 && ox == 0) ? std::move(scaled)
                                                               : pad_to(scaled, H, W, oy, ox);

    // random crop, re-padded at a random offset
    std::size_t ch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.crop_fraction * static_cast<double>(H))));
    std::size_t cw = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.crop_fraction * static_cast<double>(W))));
    ch = std::min(ch, H);
    cw = std::min(cw, W);
    std::size_t cy = draw_offset(rng, H - ch);
    std::size_t cx = draw_offset(rng, W - cw);
    std::size_t py = draw_offset(rng, H - ch);
    std::size_t px = draw_offset(rng, W - cw);
    if (ch == H && cw == W) return padded;

    Tensor crop = Tensor::zeros({x.shape[0], ch, cw});
    for (std::size_t c = 0; c < x.shape[0]; ++c)
        for (std::size_t i = 0; i < ch; ++i)
            for (std::size_t j = 0; j < cw; ++j)
                crop.at3(c, i, j) = padded.at3(c, i + cy, j + cx);
    return pad_to(crop, H, W, py, px);
}

MomentumState momentum_update(const MomentumState& state, const Tensor& smoothed_grad,
                              double mu, NormMode mode) {
    double denom = (mode == NormMode::L1 ? l1_norm(smoothed_grad) : stddev(smoothed_grad)) + 1e-12;
    Tensor g = Tensor::zeros(smoothed_grad.shape);
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = mu * state.g[i] + smoothed_grad[i] / denom;
    return {std::move(g)};
}

Tensor apply_update(const Tensor& x, const Tensor& x_orig, const MomentumState& g,
                    const AttackBudget& budget) {
    double alpha = budget.effective_alpha();
    double dir = budget.direction == Direction::NonTargeted ? 1.0 : -1.0;
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double step;
        if (budget.update_rule == UpdateRule::Sign) {
            step = alpha * sign(g.g[i]);
        } else {
            step = alpha * std::clamp(round_half_away(g.g[i]), budget.clip_lo, budget.clip_hi);
        }
        double v = out[i] + dir * step;
        double lo = std::max(0.0, x_orig[i] - budget.epsilon);
        double hi = std::min(1.0, x_orig[i] + budget.epsilon);
        out[i] = project_ball(std::clamp(v, lo, hi), x_orig[i], budget.epsilon);
    }
    return out;
}

Tensor single_model_attack(const Classifier& model, const Tensor& x, int y,
                           const AttackBudget& budget, const DiversityConfig& div_cfg,
                           const SmoothingKernel& kernel, std::mt19937_64& rng) {
    MomentumState g = MomentumState::zero(x.shape);
    Tensor x_adv = x;
    for (int t = 0; t < budget.iterations; ++t) {
        Tensor x_div = input_diversity(x_adv, div_cfg, rng);
        Tensor grad = model.input_gradient(x_div, y);
        Tensor smoothed = ti_smooth(grad, kernel);
        g = momentum_update(g, smoothed, budget.mu, budget.norm_mode);
        x_adv = apply_update(x_adv, x, g, budget);
    }
    return x_adv;
}

}  // namespace bast
