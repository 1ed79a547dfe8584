#include <doctest.h>

#include <cmath>
#include <vector>

#include "grouptraj/rng.hpp"
#include "grouptraj/training.hpp"

using namespace grouptraj;

namespace {

Scene make_scene(const std::vector<int>& sizes, std::uint64_t seed, double noise = 0.05) {
    SyntheticSpec spec;
    spec.group_sizes = sizes;
    spec.noise_sigma = noise;
    spec.seed = seed;
    const SyntheticCrowd crowd = generate_synthetic_crowd(spec);
    auto scenes = extract_scenes(crowd.table, crowd.labels);
    REQUIRE(scenes.size() == 1);
    return scenes[0];
}

std::vector<Scene> make_dataset(const std::vector<int>& sizes, int n_scenes, std::uint64_t seed,
                                double noise = 0.0) {
    SyntheticSpec spec;
    spec.group_sizes = sizes;
    spec.noise_sigma = noise;
    spec.seed = seed;
    spec.lateral_gap = 0.4;
    const SyntheticCrowd crowd = generate_synthetic_dataset(spec, n_scenes);
    auto scenes = extract_scenes(crowd.table, crowd.labels);
    REQUIRE(static_cast<int>(scenes.size()) == n_scenes);
    return scenes;
}

}  // namespace

TEST_CASE("trajectory L1 examples and loop oracle") {
    Tensor a = Tensor::filled({2, 6}, 0.7);
    CHECK(trajectory_l1(a, a).value() == 0.0);

    // constant 0.1 gap, N=2, T=3: 2*3*2*0.1 = 1.2
    Tensor pred = Tensor::filled({2, 6}, 0.6);
    CHECK(trajectory_l1(pred, a).value() == doctest::Approx(1.2));

    Rng rng(8);
    std::vector<double> x(24), y(24);
    for (std::size_t i = 0; i < 24; ++i) {
        x[i] = rng.uniform_in(-2.0, 2.0);
        y[i] = rng.uniform_in(-2.0, 2.0);
    }
    double naive = 0.0;
    for (std::size_t i = 0; i < 24; ++i) naive += std::fabs(x[i] - y[i]);
    const double via_graph =
        trajectory_l1(Tensor::from_data({4, 6}, x), Tensor::from_data({4, 6}, y)).value();
    CHECK(via_graph == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("KL against the standard normal") {
    CHECK(kl_standard_normal(Tensor::zeros({1, 1}), Tensor::filled({1, 1}, 1.0)).value() ==
          doctest::Approx(0.0));
    CHECK(kl_standard_normal(Tensor::filled({1, 1}, 1.0), Tensor::filled({1, 1}, 1.0)).value() ==
          doctest::Approx(0.5));
    CHECK(kl_standard_normal(Tensor::zeros({1, 1}), Tensor::filled({1, 1}, 2.0)).value() ==
          doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))));
    CHECK_THROWS_AS(kl_standard_normal(Tensor::zeros({1, 1}), Tensor::zeros({1, 1})),
                    std::invalid_argument);
}

TEST_CASE("KL matches a Monte-Carlo estimate of the log ratio") {
    const double mu = 0.5, var = 2.0;
    const double closed =
        kl_standard_normal(Tensor::filled({1, 1}, mu), Tensor::filled({1, 1}, var)).value();
    Rng rng(31);
    double acc = 0.0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = mu + std::sqrt(var) * rng.normal();
        const double log_q = -0.5 * (z - mu) * (z - mu) / var - 0.5 * std::log(var);
        const double log_p = -0.5 * z * z;
        acc += log_q - log_p;
    }
    CHECK(std::fabs(acc / static_cast<double>(n) - closed) < 0.01);
}

TEST_CASE("argmin picks the smallest candidate") {
    CHECK(argmin({0.5, 0.2, 0.9}) == 1);
    CHECK(argmin({1.0}) == 0);
    CHECK_THROWS_AS(argmin({}), std::invalid_argument);
}

TEST_CASE("variety loss with k=1 reduces to L1 plus weighted KL") {
    Scene scene = make_scene({2, 1}, 61);
    const RelativeRepresentation rel = compute_relative(scene);
    ModelParams p = init_model_params(GcnVariant::hierarchical, 71);
    LossConfig cfg;
    cfg.k_variety = 1;
    cfg.alpha = 0.7;
    const double loss = variety_loss(rel, scene.groups, p, cfg, 1.0, 5).value();

    const EncoderOutput enc = encode(rel, scene.groups, p);
    Tensor eps = sample_joint(scene.groups, 8, 1.0, Rng::mix(5, 0));
    Tensor pred = decode(reparameterize(enc.mu, enc.sigma, eps), last_observed_displacement(rel),
                         p, rel.horizon);
    const double manual = trajectory_l1(pred, target_displacements(rel)).value() +
                          0.7 * kl_standard_normal(enc.mu, enc.sigma).value();
    CHECK(loss == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("variety loss never exceeds any single candidate's total") {
    Scene scene = make_scene({2, 2}, 63);
    const RelativeRepresentation rel = compute_relative(scene);
    ModelParams p = init_model_params(GcnVariant::hierarchical, 73);
    LossConfig cfg;
    cfg.k_variety = 6;
    const double variety = variety_loss(rel, scene.groups, p, cfg, 1.0, 17).value();

    const EncoderOutput enc = encode(rel, scene.groups, p);
    const Tensor target = target_displacements(rel);
    const double kl = kl_standard_normal(enc.mu, enc.sigma).value();
    for (int j = 0; j < 6; ++j) {
        Tensor eps = sample_joint(scene.groups, 8, 1.0, Rng::mix(17, static_cast<std::uint64_t>(j)));
        Tensor pred = decode(reparameterize(enc.mu, enc.sigma, eps),
                             last_observed_displacement(rel), p, rel.horizon);
        const double candidate = trajectory_l1(pred, target).value() + kl;
        CHECK(variety <= candidate + 1e-12);
    }
    CHECK(variety >= cfg.alpha * kl);  // loss is bounded below by the KL share
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    x.zero_grad();
    AdamOptimizer adam(0.1);
    adam.step_single(x);
    CHECK(x.data() == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam step magnitude approaches the learning rate under constant gradient") {
    Tensor x = Tensor::from_data({1}, {0.0}, true);
    AdamOptimizer adam(0.01);
    double prev = x.data()[0];
    double step = 0.0;
    for (int i = 0; i < 1000; ++i) {
        x.zero_grad();
        // constant gradient 3.5 injected through a linear graph
        sum(scale(x, 3.5)).backward();
        adam.step_single(x);
        step = prev - x.data()[0];
        prev = x.data()[0];
    }
    CHECK(step == doctest::Approx(0.01).epsilon(0.01));
}

TEST_CASE("adam drives a quadratic bowl to the origin") {
    Tensor x = Tensor::from_data({2}, {1.0, 1.0}, true);
    AdamOptimizer adam(1e-2);
    for (int i = 0; i < 2000; ++i) {
        x.zero_grad();
        sum(mul(x, x)).backward();
        adam.step_single(x);
    }
    CHECK(std::hypot(x.data()[0], x.data()[1]) < 1e-3);
}

TEST_CASE("adam aborts on NaN gradients naming the parameter") {
    ModelParams p = init_model_params(GcnVariant::hierarchical, 77);
    p.zero_grads();
    const_cast<std::vector<double>&>(p.mlp_mu.w.grad())[0] = std::nan("");
    AdamOptimizer adam(1e-3);
    CHECK_THROWS_WITH_AS(adam.step(p), doctest::Contains("mlp_mu.w"), std::runtime_error);
}

TEST_CASE("ade and fde basics") {
    Scene scene = make_scene({2, 1}, 81);
    const std::size_t n = 3, t_len = 12;
    const std::vector<double> truth = true_future_positions(scene);

    CHECK(ade(truth, truth, n, t_len) == 0.0);
    CHECK(fde(truth, truth, n, t_len) == 0.0);

    // constant (0.3, 0.4) offset: 3-4-5 triangle distance 0.5 everywhere
    std::vector<double> shifted = truth;
    for (std::size_t i = 0; i < shifted.size(); i += 2) {
        shifted[i] += 0.3;
        shifted[i + 1] += 0.4;
    }
    CHECK(ade(shifted, truth, n, t_len) == doctest::Approx(0.5).epsilon(1e-12));

    // final-step offset (1, 0) only
    std::vector<double> final_off = truth;
    for (std::size_t i = 0; i < n; ++i) final_off[(i * t_len + t_len - 1) * 2] += 1.0;
    CHECK(fde(final_off, truth, n, t_len) == doctest::Approx(1.0));

    CHECK_THROWS_AS(ade(truth, std::vector<double>(4, 0.0), n, t_len), std::invalid_argument);
}

TEST_CASE("ade and fde agree with a naive double loop on random cases") {
    Rng rng(91);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 6;
        const std::size_t t_len = 1 + rng.next_u64() % 15;
        std::vector<double> pred(n * t_len * 2), truth(n * t_len * 2);
        for (double& v : pred) v = rng.uniform_in(-5.0, 5.0);
        for (double& v : truth) v = rng.uniform_in(-5.0, 5.0);

        double naive_ade = 0.0, naive_fde = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t t = 0; t < t_len; ++t) {
                const std::size_t b = (i * t_len + t) * 2;
                const double d = std::sqrt((pred[b] - truth[b]) * (pred[b] - truth[b]) +
                                           (pred[b + 1] - truth[b + 1]) * (pred[b + 1] - truth[b + 1]));
                acc += d;
                if (t + 1 == t_len) naive_fde += d;
            }
            naive_ade += acc / static_cast<double>(t_len);
        }
        naive_ade /= static_cast<double>(n);
        naive_fde /= static_cast<double>(n);
        CHECK(std::fabs(ade(pred, truth, n, t_len) - naive_ade) <= 1e-12);
        CHECK(std::fabs(fde(pred, truth, n, t_len) - naive_fde) <= 1e-12);

        // fde never exceeds the largest per-step error
        double max_step = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < t_len; ++t) {
                const std::size_t b = (i * t_len + t) * 2;
                max_step = std::max(max_step,
                                    std::hypot(pred[b] - truth[b], pred[b + 1] - truth[b + 1]));
            }
        CHECK(fde(pred, truth, n, t_len) <= max_step + 1e-15);
    }
}

TEST_CASE("positions rebuild from displacements by cumulative summation") {
    Scene scene = make_scene({1}, 83, 0.0);
    const RelativeRepresentation rel = compute_relative(scene);
    // feeding the true future displacements must recover the true positions
    const std::vector<double> rebuilt = positions_from_displacements(scene, rel.y_rel.data());
    const std::vector<double> truth = true_future_positions(scene);
    for (std::size_t i = 0; i < truth.size(); ++i)
        CHECK(rebuilt[i] == doctest::Approx(truth[i]).epsilon(1e-12));
}

TEST_CASE("best-of-k equals plain metrics at k=1 and improves with nesting") {
    auto scenes = make_dataset({2, 2}, 4, 85);
    ModelParams p = init_model_params(GcnVariant::hierarchical, 87);

    const Metrics k1 = best_of_k_eval(scenes, p, 1, 1.0, 11);
    // recompute by hand from the prediction sets
    double ade_acc = 0.0;
    std::size_t peds = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const PredictionSet pred = predict(scenes[s], p, 1, 1.0, Rng::mix(11, s));
        const auto pos = positions_from_displacements(scenes[s], pred.samples.data());
        const auto truth = true_future_positions(scenes[s]);
        const std::size_t n = scenes[s].num_pedestrians();
        ade_acc += ade(pos, truth, n, 12) * static_cast<double>(n);
        peds += n;
    }
    CHECK(k1.ade == doctest::Approx(ade_acc / static_cast<double>(peds)).epsilon(1e-12));

    // nested draws: the first k of k+1 samples coincide, so error is monotone
    double prev = k1.ade;
    for (int k = 2; k <= 6; ++k) {
        const Metrics m = best_of_k_eval(scenes, p, k, 1.0, 11);
        CHECK(m.ade <= prev + 1e-12);
        prev = m.ade;
    }

    const Metrics ind = best_of_k_eval(scenes, p, 5, 1.0, 11, true);
    const Metrics dep = best_of_k_eval(scenes, p, 5, 1.0, 11, false);
    CHECK(ind.fde <= dep.fde + 1e-12);  // independent min can only improve FDE
}

TEST_CASE("loss is non-negative and one small step decreases it") {
    Scene scene = make_scene({2}, 89, 0.0);
    const RelativeRepresentation rel = compute_relative(scene);
    ModelParams p = init_model_params(GcnVariant::hierarchical, 91);
    LossConfig cfg;
    cfg.k_variety = 3;
    const std::uint64_t draw_seed = 21;

    const double before = variety_loss(rel, scene.groups, p, cfg, 1.0, draw_seed).value();
    CHECK(before >= 0.0);

    p.zero_grads();
    variety_loss(rel, scene.groups, p, cfg, 1.0, draw_seed).backward();
    AdamOptimizer adam(1e-4);
    adam.step(p);
    const double after = variety_loss(rel, scene.groups, p, cfg, 1.0, draw_seed).value();
    CHECK(after < before);
}

TEST_CASE("training on a tiny synthetic set reduces validation error") {
    auto scenes = make_dataset({2}, 6, 95);
    TrainConfig cfg;
    cfg.loss.epochs = 30;
    cfg.loss.batch_size = 3;
    cfg.loss.k_variety = 3;
    cfg.loss.learning_rate = 1e-3;
    cfg.seed = 7;
    cfg.eval_k = 1;
    const TrainResult result = train_model(scenes, scenes, cfg);
    REQUIRE(result.log.size() == 30);
    CHECK(result.best_val_ade < result.log.front().val_ade);
    CHECK(result.best_epoch >= 1);
    // log lines carry the wall clock forward monotonically
    for (std::size_t i = 1; i < result.log.size(); ++i)
        CHECK(result.log[i].wall_seconds >= result.log[i - 1].wall_seconds);
}

TEST_CASE("rho sweep returns one row per requested correlation") {
    auto scenes = make_dataset({2}, 3, 97);
    TrainConfig cfg;
    cfg.loss.epochs = 2;
    cfg.loss.batch_size = 3;
    cfg.loss.k_variety = 2;
    cfg.seed = 3;
    cfg.eval_k = 2;
    const auto rows = rho_sweep(scenes, scenes, scenes, cfg, 2, {0.0, 0.5, 1.0});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].rho == 0.0);
    CHECK(rows[1].rho == 0.5);
    CHECK(rows[2].rho == 1.0);
    for (const auto& row : rows) {
        CHECK(row.ade >= 0.0);
        CHECK(row.fde >= 0.0);
    }
    CHECK_THROWS_AS(rho_sweep(scenes, scenes, scenes, cfg, 2, {1.5}), std::invalid_argument);
}
