#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bast/attack.hpp"

using namespace bast;

namespace {

Tensor random_image(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

// flatten -> dense(2) binary model with logits (w.x, -w.x)
Classifier two_class_linear(const Tensor& w, std::vector<std::size_t> input_shape) {
    Tensor W = Tensor::zeros({2, w.size()});
    for (std::size_t i = 0; i < w.size(); ++i) {
        W.data[i] = w.data[i];
        W.data[w.size() + i] = -w.data[i];
    }
    std::vector<LayerSpec> layers;
    layers.push_back({LayerKind::Flatten, {}, {}});
    layers.push_back({LayerKind::Dense, std::move(W), Tensor::zeros({2})});
    return Classifier("lin2", std::move(input_shape), std::move(layers), 2);
}

}  // namespace

TEST_CASE("fgsm: vanishing budget is near-identity and epsilon=0 is rejected") {
    std::mt19937_64 rng(1);
    Tensor w = random_image({1, 3, 3}, rng);
    Classifier m = two_class_linear(w, {1, 3, 3});
    Tensor x = random_image({1, 3, 3}, rng);
    CHECK_THROWS(fgsm(m, x, 0, 0.0));
    Tensor out = fgsm(m, x, 0, 1e-12);
    CHECK(linf_distance(out, x) <= 1e-12);
}

TEST_CASE("fgsm on a linear two-class model perturbs by epsilon*sign(w) componentwise") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor w = Tensor::zeros({1, 3, 3});
    for (double& v : w.data) v = nd(rng);
    Classifier m = two_class_linear(w, {1, 3, 3});
    Tensor x = Tensor::full({1, 3, 3}, 0.5);  // interior, so no clamping
    double eps = 0.05;

    // Ascending the class-0 loss pushes along -w; class-1 loss along +w.
    Tensor a0 = fgsm(m, x, 0, eps);
    Tensor a1 = fgsm(m, x, 1, eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double s = w.data[i] > 0.0 ? 1.0 : -1.0;
        CHECK(a0[i] == doctest::Approx(0.5 - eps * s).epsilon(1e-12));
        CHECK(a1[i] == doctest::Approx(0.5 + eps * s).epsilon(1e-12));
    }
}

TEST_CASE("fgsm respects the L-inf bound exactly on random images") {
    std::mt19937_64 rng(3);
    Tensor w = random_image({1, 4, 4}, rng);
    Classifier m = two_class_linear(w, {1, 4, 4});
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor x = random_image({1, 4, 4}, rng);
        double eps = 0.001 + 0.2 * std::uniform_real_distribution<double>(0, 1)(rng);
        Tensor out = fgsm(m, x, trial % 2, eps);
        CHECK(linf_distance(out, x) <= eps);
        for (double v : out.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("gaussian_kernel basics") {
    SmoothingKernel k1 = gaussian_kernel(1, 2.0);
    CHECK(k1.weights.size() == 1);
    CHECK(k1.weights[0] == doctest::Approx(1.0));

    SmoothingKernel flat = gaussian_kernel(3, 1e6);
    for (double v : flat.weights.data) CHECK(v == doctest::Approx(1.0 / 9.0).epsilon(1e-9));

    SmoothingKernel k = gaussian_kernel(7, 3.0);
    double sum = 0.0;
    for (double v : k.weights.data) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    // flip symmetry, exact
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(k.weights.data[i * 7 + j] == k.weights.data[(6 - i) * 7 + j]);
            CHECK(k.weights.data[i * 7 + j] == k.weights.data[i * 7 + (6 - j)]);
        }
    CHECK_THROWS(gaussian_kernel(4, 1.0));
}

TEST_CASE("ti_smooth: 1x1 kernel is bit-exact identity; sums preserved on interior support") {
    std::mt19937_64 rng(4);
    Tensor g = random_image({1, 9, 9}, rng);
    Tensor same = ti_smooth(g, gaussian_kernel(1, 1.0));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(same[i] == g[i]);

    // interior-supported gradient: zero border wide enough for a 5x5 kernel
    Tensor interior = Tensor::zeros({1, 11, 11});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 2; i < 9; ++i)
        for (std::size_t j = 2; j < 9; ++j) interior.at3(0, i, j) = u(rng);
    Tensor sm = ti_smooth(interior, gaussian_kernel(5, 1.5));
    double s0 = 0.0, s1 = 0.0;
    for (double v : interior.data) s0 += v;
    for (double v : sm.data) s1 += v;
    CHECK(std::fabs(s0 - s1) <= 1e-10);
}

TEST_CASE("ti_smooth impulse response is a Gaussian bump") {
    Tensor g = Tensor::zeros({1, 9, 9});
    g.at3(0, 4, 4) = 1.0;
    SmoothingKernel k = gaussian_kernel(5, 1.0);
    Tensor sm = ti_smooth(g, k);
    for (int di = -2; di <= 2; ++di)
        for (int dj = -2; dj <= 2; ++dj)
            CHECK(sm.at3(0, static_cast<std::size_t>(4 + di), static_cast<std::size_t>(4 + dj)) ==
                  doctest::Approx(k.weights.data[static_cast<std::size_t>((di + 2) * 5 + dj + 2)]));
    CHECK(sm.at3(0, 0, 0) == 0.0);
}

TEST_CASE("input_diversity: identity cases and determinism") {
    std::mt19937_64 rng(5);
    Tensor x = random_image({1, 8, 8}, rng);

    DiversityConfig off;
    off.apply_probability = 0.0;
    std::mt19937_64 r1(10);
    Tensor same = input_diversity(x, off, r1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

    DiversityConfig degenerate;
    degenerate.apply_probability = 1.0;
    degenerate.scale_min = degenerate.scale_max = 1.0;
    degenerate.crop_fraction = 1.0;
    std::mt19937_64 r2(11);
    Tensor same2 = input_diversity(x, degenerate, r2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same2[i] == x[i]);

    DiversityConfig cfg;  // defaults
    cfg.apply_probability = 1.0;
    std::mt19937_64 ra(12), rb(12);
    Tensor a = input_diversity(x, cfg, ra);
    Tensor b = input_diversity(x, cfg, rb);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // output stays in the pixel domain
    for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("momentum_update: L1 normalization, zero-grad guard, std oracle") {
    std::mt19937_64 rng(6);
    Tensor grad = random_image({1, 4, 4}, rng);
    for (double& v : grad.data) v -= 0.5;
    MomentumState zero = MomentumState::zero({1, 4, 4});

    MomentumState l1 = momentum_update(zero, grad, 0.0, NormMode::L1);
    CHECK(l1_norm(l1.g) == doctest::Approx(1.0).epsilon(1e-9));

    MomentumState prev{Tensor::full({1, 4, 4}, 0.3)};
    MomentumState guarded = momentum_update(prev, Tensor::zeros({1, 4, 4}), 0.7, NormMode::Std);
    for (double v : guarded.g.data) CHECK(v == doctest::Approx(0.21).epsilon(1e-12));
    CHECK(guarded.g.all_finite());

    // independent two-pass std oracle
    double mean = 0.0;
    for (double v : grad.data) mean += v;
    mean /= static_cast<double>(grad.size());
    double var = 0.0;
    for (double v : grad.data) var += (v - mean) * (v - mean);
    double s = std::sqrt(var / static_cast<double>(grad.size()));

    MomentumState st = momentum_update(prev, grad, 0.7, NormMode::Std);
    for (std::size_t i = 0; i < grad.size(); ++i)
        CHECK(st.g[i] - 0.7 * prev.g[i] == doctest::Approx(grad[i] / s).epsilon(1e-9));
}

TEST_CASE("apply_update: sign and clip-round arithmetic, projection bounds") {
    Tensor x = Tensor::full({1, 2, 2}, 0.5);
    AttackBudget budget;
    budget.epsilon = 0.1;
    budget.iterations = 10;  // alpha = 0.01
    budget.update_rule = UpdateRule::Sign;
    budget.direction = Direction::NonTargeted;

    MomentumState g{Tensor::full({1, 2, 2}, 2.5)};
    Tensor up = apply_update(x, x, g, budget);
    for (double v : up.data) CHECK(v == doctest::Approx(0.51).epsilon(1e-15));

    budget.update_rule = UpdateRule::ClipRound;
    MomentumState g2{Tensor({1, 2, 2}, {3.7, -0.4, 1.5, -2.6})};
    Tensor up2 = apply_update(x, x, g2, budget);
    CHECK(up2[0] == doctest::Approx(0.5 + 0.01 * 2.0).epsilon(1e-15));  // round 4, clip 2
    CHECK(up2[1] == doctest::Approx(0.5).epsilon(1e-15));               // round 0
    CHECK(up2[2] == doctest::Approx(0.5 + 0.01 * 2.0).epsilon(1e-15));  // half away from zero
    CHECK(up2[3] == doctest::Approx(0.5 - 0.01 * 2.0).epsilon(1e-15));  // round -3, clip -2

    // repeated updates never escape the epsilon ball or the domain
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd(0.0, 3.0);
    Tensor cur = x;
    for (int t = 0; t < 200; ++t) {
        MomentumState gr{Tensor::zeros({1, 2, 2})};
        for (double& v : gr.g.data) v = nd(rng);
        budget.update_rule = t % 2 ? UpdateRule::Sign : UpdateRule::ClipRound;
        budget.direction = t % 3 ? Direction::NonTargeted : Direction::Targeted;
        cur = apply_update(cur, x, gr, budget);
        CHECK(linf_distance(cur, x) <= budget.epsilon);
        for (double v : cur.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("single_model_attack with everything disabled reduces to FGSM, bit-exact") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor w = Tensor::zeros({1, 5, 5});
    for (double& v : w.data) v = nd(rng);
    Classifier m = two_class_linear(w, {1, 5, 5});

    AttackBudget budget;
    budget.epsilon = 16.0 / 255.0;
    budget.iterations = 1;
    budget.mu = 0.0;
    budget.update_rule = UpdateRule::Sign;
    budget.direction = Direction::NonTargeted;
    DiversityConfig div;
    div.apply_probability = 0.0;
    SmoothingKernel k = gaussian_kernel(1, 1.0);

    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_image({1, 5, 5}, rng);
        std::mt19937_64 attack_rng(100 + trial);
        Tensor a = single_model_attack(m, x, trial % 2, budget, div, k, attack_rng);
        Tensor b = fgsm(m, x, trial % 2, budget.epsilon);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("single_model_attack: TI 1x1 kernel identical to smallest smoothing path") {
    // 1x1 kernel output must be bit-identical to feeding the raw gradient
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor w = Tensor::zeros({1, 4, 4});
    for (double& v : w.data) v = nd(rng);
    Classifier m = two_class_linear(w, {1, 4, 4});
    Tensor x = random_image({1, 4, 4}, rng);
    Tensor g = m.input_gradient(x, 0);
    Tensor sm = ti_smooth(g, gaussian_kernel(1, 5.0));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(sm[i] == g[i]);
}

TEST_CASE("single_model_attack: determinism and exact L-inf soundness") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor w = Tensor::zeros({1, 6, 6});
    for (double& v : w.data) v = nd(rng);
    Classifier m = two_class_linear(w, {1, 6, 6});

    AttackBudget budget;
    budget.epsilon = 0.08;
    budget.iterations = 12;
    DiversityConfig div;  // defaults, probabilistic
    SmoothingKernel k = gaussian_kernel(3, 1.0);

    Tensor x = random_image({1, 6, 6}, rng);
    std::mt19937_64 ra(77), rb(77);
    Tensor a = single_model_attack(m, x, 0, budget, div, k, ra);
    Tensor b = single_model_attack(m, x, 0, budget, div, k, rb);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    CHECK(linf_distance(a, x) <= budget.epsilon);
    for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("momentum with mu=1 and constant gradient grows linearly") {
    Tensor grad = Tensor::full({1, 3, 3}, 0.5);
    grad.at3(0, 0, 0) = 1.5;  // nonzero std
    MomentumState g = MomentumState::zero({1, 3, 3});
    std::vector<double> norms;
    for (int t = 1; t <= 50; ++t) {
        g = momentum_update(g, grad, 1.0, NormMode::Std);
        norms.push_back(l1_norm(g.g));
    }
    for (std::size_t t = 0; t < norms.size(); ++t) {
        double expected = norms[0] * static_cast<double>(t + 1);
        CHECK(std::fabs(norms[t] - expected) <= 1e-9 * expected);
    }
}
