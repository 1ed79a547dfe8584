#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grouptraj/dataset.hpp"
#include "grouptraj/model.hpp"
#include "grouptraj/rng.hpp"
#include "grouptraj/sampler.hpp"
#include "grouptraj/tensor.hpp"

namespace grouptraj {

// Loss, optimizer, displacement metrics, the best-of-k evaluation protocol
// and the correlation sweep.

struct LossConfig {
    double alpha = 1.0;          // KL weight
    int k_variety = 20;
    double learning_rate = 1e-4;
    int batch_size = 64;  // scenes per optimizer step, gradients averaged
    int epochs = 400;
};

// ---------------------------------------------------------------------------
// Loss terms (graph scalars)
// ---------------------------------------------------------------------------

// Summed L1 distance between predicted and ground-truth displacements.
inline Tensor trajectory_l1(const Tensor& pred_disp, const Tensor& true_disp) {
    return sum(abs(sub(pred_disp, true_disp)));
}

// KL(N(mu, Sigma) || N(0, I)) summed over pedestrians and latent dims:
// 1/2 (Sigma + mu^2 - 1 - log Sigma).
inline Tensor kl_standard_normal(const Tensor& mu, const Tensor& sigma) {
    Tensor inner = sub(add_scalar(add(sigma, mul(mu, mu)), -1.0), log(sigma));
    return scale(sum(inner), 0.5);
}

inline std::size_t argmin(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("argmin of empty range");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[best]) best = i;
    return best;
}

// Variety loss: decode k candidates from k joint draws, keep the minimum L1
// per pedestrian, add the KL term once. Gradients flow only through the
// selected candidates and the KL term.
inline Tensor variety_loss(const RelativeRepresentation& rel, const GroupAssignment& groups,
                           ModelParams& params, const LossConfig& cfg, double rho,
                           std::uint64_t seed) {
    if (cfg.k_variety < 1) throw std::invalid_argument("training: k_variety must be >= 1");
    const EncoderOutput enc = encode(rel, groups, params);
    const Tensor last_disp = last_observed_displacement(rel);
    const Tensor target = target_displacements(rel);
    const std::size_t n = rel.n;

    // per-pedestrian L1 scalars for every candidate
    std::vector<std::vector<Tensor>> per_ped(n);
    for (int j = 0; j < cfg.k_variety; ++j) {
        Tensor eps = sample_joint(groups, ModelDims::latent, rho,
                                  Rng::mix(seed, static_cast<std::uint64_t>(j)));
        Tensor z = reparameterize(enc.mu, enc.sigma, eps);
        Tensor pred = decode(z, last_disp, params, rel.horizon);
        for (std::size_t p = 0; p < n; ++p) {
            per_ped[p].push_back(trajectory_l1(slice_rows(pred, p, 1), slice_rows(target, p, 1)));
        }
    }

    Tensor total;
    bool first = true;
    for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> values;
        values.reserve(per_ped[p].size());
        for (const Tensor& t : per_ped[p]) values.push_back(t.value());
        const Tensor& selected = per_ped[p][argmin(values)];
        total = first ? selected : add(total, selected);
        first = false;
    }
    return add(total, scale(kl_standard_normal(enc.mu, enc.sigma), cfg.alpha));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ModelParams& params) {
        ++t_;
        params.for_each([this](const std::string& name, Tensor& p) { update(name, p); });
    }

    // Single-tensor form for stand-alone optimization problems.
    void step_single(Tensor& x, const std::string& name = "x") {
        ++t_;
        update(name, x);
    }

    long step_count() const { return t_; }

private:
    void update(const std::string& name, Tensor& p) {
        const std::vector<double>& g = p.grad();
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::isnan(g[i]))
                throw std::runtime_error("adam: NaN gradient in parameter '" + name + "'");
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.data()[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
    double ade = 0.0;
    double fde = 0.0;
    std::size_t n_scenes = 0;
    std::size_t n_peds = 0;
};

// Absolute positions from predicted displacements, cumulatively summed from
// the last observed position. disp is N x T x 2; result is N x T x 2.
inline std::vector<double> positions_from_displacements(const Scene& scene, const double* disp) {
    const std::size_t n = scene.num_pedestrians();
    const std::size_t t_len = static_cast<std::size_t>(scene.horizon);
    std::vector<double> pos(n * t_len * 2);
    for (std::size_t i = 0; i < n; ++i) {
        double x = scene.px(i, scene.t_obs - 1);
        double y = scene.py(i, scene.t_obs - 1);
        for (std::size_t t = 0; t < t_len; ++t) {
            x += disp[(i * t_len + t) * 2];
            y += disp[(i * t_len + t) * 2 + 1];
            pos[(i * t_len + t) * 2] = x;
            pos[(i * t_len + t) * 2 + 1] = y;
        }
    }
    return pos;
}

inline std::vector<double> true_future_positions(const Scene& scene) {
    const std::size_t n = scene.num_pedestrians();
    const std::size_t t_len = static_cast<std::size_t>(scene.horizon);
    std::vector<double> pos(n * t_len * 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < t_len; ++t) {
            pos[(i * t_len + t) * 2] = scene.px(i, scene.t_obs + static_cast<int>(t));
            pos[(i * t_len + t) * 2 + 1] = scene.py(i, scene.t_obs + static_cast<int>(t));
        }
    return pos;
}

namespace detail {

inline void check_position_shapes(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t n, std::size_t t_len, const char* what) {
    if (a.size() != n * t_len * 2 || b.size() != n * t_len * 2)
        throw std::invalid_argument(std::string("metrics: ") + what + " shape mismatch");
}

inline double ped_ade(const std::vector<double>& pred, const std::vector<double>& truth,
                      std::size_t i, std::size_t t_len) {
    double acc = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        const std::size_t b = (i * t_len + t) * 2;
        acc += std::hypot(pred[b] - truth[b], pred[b + 1] - truth[b + 1]);
    }
    return acc / static_cast<double>(t_len);
}

inline double ped_fde(const std::vector<double>& pred, const std::vector<double>& truth,
                      std::size_t i, std::size_t t_len) {
    const std::size_t b = (i * t_len + t_len - 1) * 2;
    return std::hypot(pred[b] - truth[b], pred[b + 1] - truth[b + 1]);
}

}  // namespace detail

// Mean L2 distance over all pedestrians and prediction steps.
inline double ade(const std::vector<double>& pred_pos, const std::vector<double>& true_pos,
                  std::size_t n, std::size_t t_len) {
    detail::check_position_shapes(pred_pos, true_pos, n, t_len, "ade");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += detail::ped_ade(pred_pos, true_pos, i, t_len);
    return acc / static_cast<double>(n);
}

// Mean L2 distance at the final prediction step.
inline double fde(const std::vector<double>& pred_pos, const std::vector<double>& true_pos,
                  std::size_t n, std::size_t t_len) {
    detail::check_position_shapes(pred_pos, true_pos, n, t_len, "fde");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += detail::ped_fde(pred_pos, true_pos, i, t_len);
    return acc / static_cast<double>(n);
}

// Best-of-k protocol: per pedestrian, the sample minimizing that
// pedestrian's ADE is selected; its FDE is reported alongside unless
// independent_min_fde asks for the per-pedestrian minimum FDE instead.
inline Metrics best_of_k_eval(const std::vector<Scene>& scenes, ModelParams& params, int k,
                              double rho, std::uint64_t seed, bool independent_min_fde = false) {
    Metrics metrics;
    double ade_acc = 0.0, fde_acc = 0.0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const Scene& scene = scenes[s];
        const PredictionSet pred = predict(scene, params, k, rho,
                                           Rng::mix(seed, static_cast<std::uint64_t>(s)));
        const std::vector<double> truth = true_future_positions(scene);
        const std::size_t n = scene.num_pedestrians();
        const std::size_t t_len = static_cast<std::size_t>(scene.horizon);

        std::vector<std::vector<double>> sample_pos(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
            const double* disp = &pred.samples[static_cast<std::size_t>(j) * n * t_len * 2];
            sample_pos[static_cast<std::size_t>(j)] = positions_from_displacements(scene, disp);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double best_ade = std::numeric_limits<double>::infinity();
            double best_fde = std::numeric_limits<double>::infinity();
            double fde_of_best = 0.0;
            for (int j = 0; j < k; ++j) {
                const auto& pos = sample_pos[static_cast<std::size_t>(j)];
                const double a = detail::ped_ade(pos, truth, i, t_len);
                const double f = detail::ped_fde(pos, truth, i, t_len);
                if (a < best_ade) {
                    best_ade = a;
                    fde_of_best = f;
                }
                best_fde = std::min(best_fde, f);
            }
            ade_acc += best_ade;
            fde_acc += independent_min_fde ? best_fde : fde_of_best;
            ++metrics.n_peds;
        }
        ++metrics.n_scenes;
    }
    if (metrics.n_peds == 0) throw std::invalid_argument("metrics: no pedestrians to evaluate");
    metrics.ade = ade_acc / static_cast<double>(metrics.n_peds);
    metrics.fde = fde_acc / static_cast<double>(metrics.n_peds);
    return metrics;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    LossConfig loss;
    double rho = 1.0;  // correlation used for training-time joint draws
    GcnVariant variant = GcnVariant::hierarchical;
    std::uint64_t seed = 1;
    int eval_k = 1;         // best-of-k used for validation ADE
    double target_ade = 0.0;  // > 0: stop once validation ADE falls below
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_ade = 0.0;
    double val_fde = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;  // lowest-validation-ADE parameters
    double best_val_ade = 0.0;
    double best_val_fde = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<EpochLog> log;
};

inline TrainResult train_model(const std::vector<Scene>& train_scenes,
                               const std::vector<Scene>& val_scenes, const TrainConfig& cfg,
                               ModelParams* initial = nullptr) {
    if (train_scenes.empty()) throw std::invalid_argument("training: no training scenes");
    if (val_scenes.empty()) throw std::invalid_argument("training: no validation scenes");
    if (cfg.loss.batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
    validate_rho(cfg.rho);

    std::vector<RelativeRepresentation> rels;
    rels.reserve(train_scenes.size());
    for (const Scene& s : train_scenes) rels.push_back(compute_relative(s));

    ModelParams params = initial ? *initial : init_model_params(cfg.variant, cfg.seed);
    AdamOptimizer adam(cfg.loss.learning_rate);

    TrainResult result;
    result.best_val_ade = std::numeric_limits<double>::infinity();
    std::string best_snapshot = format_checkpoint(params);
    const std::uint64_t eval_seed = Rng::mix(cfg.seed, 0x65766179ULL);

    const auto t_start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.loss.epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        Rng shuffle_rng(Rng::mix(cfg.seed, 0x73687566ULL + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = shuffle_rng.next_u64() % i;
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t pos = 0;
        std::uint64_t draw_counter = static_cast<std::uint64_t>(epoch) << 24;
        while (pos < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), pos + static_cast<std::size_t>(cfg.loss.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(batch_end - pos);
            params.zero_grads();
            for (; pos < batch_end; ++pos) {
                const std::size_t idx = order[pos];
                Tensor loss = variety_loss(rels[idx], train_scenes[idx].groups, params, cfg.loss,
                                           cfg.rho, Rng::mix(cfg.seed, draw_counter++));
                if (!std::isfinite(loss.value()))
                    throw std::runtime_error("training: non-finite loss at epoch " +
                                             std::to_string(epoch));
                epoch_loss += loss.value();
                scale(loss, inv_batch).backward();
            }
            adam.step(params);
        }
        epoch_loss /= static_cast<double>(train_scenes.size());

        const Metrics val = best_of_k_eval(val_scenes, params, cfg.eval_k, cfg.rho, eval_seed);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.log.push_back({epoch, epoch_loss, val.ade, val.fde, wall});
        result.epochs_run = epoch;

        if (val.ade < result.best_val_ade) {
            result.best_val_ade = val.ade;
            result.best_val_fde = val.fde;
            result.best_epoch = epoch;
            best_snapshot = format_checkpoint(params);
        }
        if (cfg.target_ade > 0.0 && val.ade < cfg.target_ade) break;
    }
    result.params = parse_checkpoint(best_snapshot, "<snapshot>");
    return result;
}

// ---------------------------------------------------------------------------
// Correlation sweep
// ---------------------------------------------------------------------------

struct RhoSweepRow {
    double rho = 0.0;
    double ade = 0.0;
    double fde = 0.0;
};

// Trains and evaluates one model per correlation setting; rows come back in
// input order.
inline std::vector<RhoSweepRow> rho_sweep(const std::vector<Scene>& train_scenes,
                                          const std::vector<Scene>& val_scenes,
                                          const std::vector<Scene>& eval_scenes,
                                          const TrainConfig& base_cfg, int eval_k,
                                          const std::vector<double>& rhos = {0.0, 0.2, 0.5, 0.7,
                                                                             0.9, 1.0}) {
    std::vector<RhoSweepRow> rows;
    for (double rho : rhos) {
        validate_rho(rho);
        TrainConfig cfg = base_cfg;
        cfg.rho = rho;
        TrainResult trained = train_model(train_scenes, val_scenes, cfg);
        const Metrics m = best_of_k_eval(eval_scenes, trained.params, eval_k, rho,
                                         Rng::mix(cfg.seed, 0x7277ULL));
        rows.push_back({rho, m.ade, m.fde});
    }
    return rows;
}

}  // namespace grouptraj
