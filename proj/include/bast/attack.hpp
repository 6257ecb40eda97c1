#pragma once

#include <random>

#include "bast/model.hpp"
#include "bast/tensor.hpp"

namespace bast {

enum class UpdateRule { Sign, ClipRound };
enum class Direction { NonTargeted, Targeted };  // ascent on y_true vs descent on y_target
enum class NormMode { L1, Std };

struct AttackBudget {
    double epsilon = 16.0 / 255.0;  // L-inf radius, pixel-domain units
    int iterations = 10;
    double mu = 1.0;
    double alpha = 0.0;  // step size; <= 0 means epsilon / iterations
    UpdateRule update_rule = UpdateRule::ClipRound;
    Direction direction = Direction::NonTargeted;
    NormMode norm_mode = NormMode::Std;
    // clip window for the ClipRound rule; the constants come unexplained,
    // so they stay configurable
    double clip_lo = -2.0;
    double clip_hi = 2.0;

    double effective_alpha() const {
        return alpha > 0.0 ? alpha : epsilon / static_cast<double>(iterations);
    }
};

struct MomentumState {
    Tensor g;  // zero-initialized, same shape as the image
    static MomentumState zero(const std::vector<std::size_t>& shape) {
        return {Tensor::zeros(shape)};
    }
};

struct DiversityConfig {
    double apply_probability = 0.5;
    double scale_min = 0.85;
    double scale_max = 1.0;
    double crop_fraction = 0.9;
};

struct SmoothingKernel {
    Tensor weights;  // [k,k], nonnegative, sums to 1
    double sigma = 0.0;
};

// Single-step sign attack (ascent on the true-label loss):
// x* = clamp_[0,1](x + eps * sign(grad J(x,y))).
Tensor fgsm(const Classifier& model, const Tensor& x, int y, double epsilon);

// Discretized 2-D Gaussian, normalized to sum 1. size must be odd.
SmoothingKernel gaussian_kernel(std::size_t size, double sigma);

// Translation-invariant smoothing: per-channel same-shape convolution of the
// gradient with the kernel.
Tensor ti_smooth(const Tensor& grad, const SmoothingKernel& kernel);

// Random resize / zero-pad / crop preprocess. Applied with probability
// cfg.apply_probability; deterministic given the RNG state.
Tensor input_diversity(const Tensor& x, const DiversityConfig& cfg, std::mt19937_64& rng);

// g' = mu*g + grad/||grad||_1 (L1 mode) or g' = mu*g + grad/std(grad) (Std
// mode); denominators guarded by +1e-12.
MomentumState momentum_update(const MomentumState& state, const Tensor& smoothed_grad,
                              double mu, NormMode mode);

// One update step followed by projection onto [x_orig-eps, x_orig+eps] n [0,1].
Tensor apply_update(const Tensor& x, const Tensor& x_orig, const MomentumState& g,
                    const AttackBudget& budget);

// Full single-model iterative attack: diversify, gradient, smooth, momentum,
// update, project, for budget.iterations rounds.
Tensor single_model_attack(const Classifier& model, const Tensor& x, int y,
                           const AttackBudget& budget, const DiversityConfig& div_cfg,
                           const SmoothingKernel& kernel, std::mt19937_64& rng);

}  // namespace bast
