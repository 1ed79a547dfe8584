#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grouptraj/dataset.hpp"
#include "grouptraj/group_graph.hpp"
#include "grouptraj/groups.hpp"
#include "grouptraj/rng.hpp"
#include "grouptraj/sampler.hpp"
#include "grouptraj/tensor.hpp"
#include "grouptraj/text_io.hpp"

namespace grouptraj {

// The full differentiable forward pass: per-pedestrian self representation
// (motion LSTM + pooled spatial context), a two-level group interaction
// stack, latent distribution heads, and an autoregressive displacement
// decoder. Architecture widths are fixed:
//   embeddings 16, encoder LSTM hidden 32, GCN layers 72 -> 16,
//   latent 8, decoder LSTM hidden 32, output 2.

struct ModelDims {
    static constexpr std::size_t embed = 16;
    static constexpr std::size_t enc_hidden = 32;
    static constexpr std::size_t self_width = enc_hidden + embed;  // 48
    static constexpr std::size_t gcn_hidden = 72;
    static constexpr std::size_t gcn_out = 16;
    static constexpr std::size_t feature_width = 2 * gcn_out;  // 32
    static constexpr std::size_t latent = 8;
    static constexpr std::size_t dec_hidden = 32;
    static constexpr std::size_t dec_input = latent + embed;  // 24
};

enum class GcnVariant { hierarchical, parallel };

inline std::string to_string(GcnVariant v) {
    return v == GcnVariant::hierarchical ? "hierarchical" : "parallel";
}

inline GcnVariant variant_from_string(const std::string& s) {
    if (s == "hierarchical") return GcnVariant::hierarchical;
    if (s == "parallel") return GcnVariant::parallel;
    throw std::invalid_argument("model: unknown GCN variant '" + s + "'");
}

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
};

// Single LSTM cell with gate order (input, forget, cell, output) packed into
// one [in, 4H] / [H, 4H] pair plus bias.
struct LstmCell {
    Tensor w_ih;
    Tensor w_hh;
    Tensor b;
    std::size_t hidden = 0;
};

struct LstmState {
    Tensor h;
    Tensor c;
};

inline Tensor linear(const Tensor& x, const Linear& l) { return add(matmul(x, l.w), l.b); }

inline Tensor linear_relu(const Tensor& x, const Linear& l) { return relu(linear(x, l)); }

inline LstmState lstm_zero_state(std::size_t batch, std::size_t hidden) {
    return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
}

inline LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmCell& cell) {
    const std::size_t h = cell.hidden;
    Tensor gates = add(add(matmul(x, cell.w_ih), matmul(state.h, cell.w_hh)), cell.b);
    Tensor i = sigmoid(slice_cols(gates, 0, h));
    Tensor f = sigmoid(slice_cols(gates, h, h));
    Tensor g = tanh(slice_cols(gates, 2 * h, h));
    Tensor o = sigmoid(slice_cols(gates, 3 * h, h));
    Tensor c_next = add(mul(f, state.c), mul(i, g));
    Tensor h_next = mul(o, tanh(c_next));
    return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ModelParams {
    GcnVariant variant = GcnVariant::hierarchical;
    Linear mlp_mot;    // 2 -> 16
    Linear mlp_sp;     // 2 -> 16
    LstmCell enc_lstm; // 16 -> 32
    Linear gcn_intra1; // 48 -> 72
    Linear gcn_intra2; // 72 -> 16
    Linear gcn_inter1; // 16 -> 72 (parallel variant: 48 -> 72)
    Linear gcn_inter2; // 72 -> 16
    Linear mlp_mu;     // 32 -> 8
    Linear mlp_logvar; // 32 -> 8
    Linear mlp_de;     // 2 -> 16
    LstmCell dec_lstm; // 24 -> 32
    Linear mlp_out;    // 32 -> 2

    // Enumerates every learnable tensor exactly once, in a fixed order.
    template <typename Fn>
    void for_each(Fn&& fn) {
        fn("mlp_mot.w", mlp_mot.w);
        fn("mlp_mot.b", mlp_mot.b);
        fn("mlp_sp.w", mlp_sp.w);
        fn("mlp_sp.b", mlp_sp.b);
        fn("enc_lstm.w_ih", enc_lstm.w_ih);
        fn("enc_lstm.w_hh", enc_lstm.w_hh);
        fn("enc_lstm.b", enc_lstm.b);
        fn("gcn_intra1.w", gcn_intra1.w);
        fn("gcn_intra1.b", gcn_intra1.b);
        fn("gcn_intra2.w", gcn_intra2.w);
        fn("gcn_intra2.b", gcn_intra2.b);
        fn("gcn_inter1.w", gcn_inter1.w);
        fn("gcn_inter1.b", gcn_inter1.b);
        fn("gcn_inter2.w", gcn_inter2.w);
        fn("gcn_inter2.b", gcn_inter2.b);
        fn("mlp_mu.w", mlp_mu.w);
        fn("mlp_mu.b", mlp_mu.b);
        fn("mlp_logvar.w", mlp_logvar.w);
        fn("mlp_logvar.b", mlp_logvar.b);
        fn("mlp_de.w", mlp_de.w);
        fn("mlp_de.b", mlp_de.b);
        fn("dec_lstm.w_ih", dec_lstm.w_ih);
        fn("dec_lstm.w_hh", dec_lstm.w_hh);
        fn("dec_lstm.b", dec_lstm.b);
        fn("mlp_out.w", mlp_out.w);
        fn("mlp_out.b", mlp_out.b);
    }

    void zero_grads() {
        for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each([&n](const std::string&, Tensor& t) { n += t.size(); });
        return n;
    }
};

namespace detail {

inline Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(shape_product(shape));
    for (double& v : data) v = rng.uniform_in(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

inline Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
    return {init_weight({in, out}, in, rng), init_weight({out}, in, rng)};
}

inline LstmCell init_lstm(std::size_t in, std::size_t hidden, Rng& rng) {
    LstmCell cell;
    cell.w_ih = init_weight({in, 4 * hidden}, in + hidden, rng);
    cell.w_hh = init_weight({hidden, 4 * hidden}, in + hidden, rng);
    cell.b = init_weight({4 * hidden}, in + hidden, rng);
    cell.hidden = hidden;
    return cell;
}

}  // namespace detail

inline ModelParams init_model_params(GcnVariant variant, std::uint64_t seed) {
    using D = ModelDims;
    Rng rng(seed);
    ModelParams p;
    p.variant = variant;
    p.mlp_mot = detail::init_linear(2, D::embed, rng);
    p.mlp_sp = detail::init_linear(2, D::embed, rng);
    p.enc_lstm = detail::init_lstm(D::embed, D::enc_hidden, rng);
    p.gcn_intra1 = detail::init_linear(D::self_width, D::gcn_hidden, rng);
    p.gcn_intra2 = detail::init_linear(D::gcn_hidden, D::gcn_out, rng);
    const std::size_t inter_in = variant == GcnVariant::parallel ? D::self_width : D::gcn_out;
    p.gcn_inter1 = detail::init_linear(inter_in, D::gcn_hidden, rng);
    p.gcn_inter2 = detail::init_linear(D::gcn_hidden, D::gcn_out, rng);
    p.mlp_mu = detail::init_linear(D::feature_width, D::latent, rng);
    p.mlp_logvar = detail::init_linear(D::feature_width, D::latent, rng);
    p.mlp_de = detail::init_linear(2, D::embed, rng);
    p.dec_lstm = detail::init_lstm(D::dec_input, D::dec_hidden, rng);
    p.mlp_out = detail::init_linear(D::dec_hidden, 2, rng);
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct EncoderOutput {
    Tensor e;      // [N, 32] concatenated intra ++ inter features
    Tensor mu;     // [N, 8]
    Tensor sigma;  // [N, 8] strictly positive variances
};

namespace detail {

inline void reject_non_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x))
            throw std::invalid_argument(std::string("model: non-finite value in ") + what);
    }
}

inline Tensor observed_step(const RelativeRepresentation& rel, int t) {
    const std::size_t n = rel.n;
    std::vector<double> step(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * static_cast<std::size_t>(rel.t_obs) +
                                  static_cast<std::size_t>(t)) * 2;
        step[i * 2] = rel.x_rel[base];
        step[i * 2 + 1] = rel.x_rel[base + 1];
    }
    return Tensor::from_data({n, 2}, std::move(step));
}

}  // namespace detail

inline Tensor last_observed_displacement(const RelativeRepresentation& rel) {
    return detail::observed_step(rel, rel.t_obs - 1);
}

// Future displacements as an [N, 2T] constant, step t in columns 2t, 2t+1.
inline Tensor target_displacements(const RelativeRepresentation& rel) {
    const std::size_t n = rel.n, t_len = static_cast<std::size_t>(rel.horizon);
    std::vector<double> data(n * t_len * 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < t_len; ++t) {
            data[i * t_len * 2 + t * 2] = rel.y_rel[(i * t_len + t) * 2];
            data[i * t_len * 2 + t * 2 + 1] = rel.y_rel[(i * t_len + t) * 2 + 1];
        }
    return Tensor::from_data({n, t_len * 2}, std::move(data));
}

// Self representation c_i: final hidden state of the motion LSTM over the
// embedded displacement sequence, concatenated with the average embedded
// relative position of everyone in the scene (self included, at zero).
inline Tensor encode_self(const RelativeRepresentation& rel, ModelParams& params) {
    detail::reject_non_finite(rel.x_rel, "x_rel");
    detail::reject_non_finite(rel.p_rel, "p_rel");
    const std::size_t n = rel.n;

    LstmState state = lstm_zero_state(n, ModelDims::enc_hidden);
    for (int t = 0; t < rel.t_obs; ++t) {
        Tensor emb = linear_relu(detail::observed_step(rel, t), params.mlp_mot);
        state = lstm_step(emb, state, params.enc_lstm);
    }

    Tensor pairs = Tensor::from_data({n * n, 2}, rel.p_rel);
    Tensor pair_emb = linear_relu(pairs, params.mlp_sp);
    // Block-averaging matrix: row i averages the n rows belonging to i.
    Tensor avg = Tensor::zeros({n, n * n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) avg.at(i, i * n + j) = 1.0 / static_cast<double>(n);
    Tensor spatial = matmul(avg, pair_emb);

    return concat_cols(state.h, spatial);
}

// Two GCN layers, H' = ReLU(A H W + b), with a row-stochastic adjacency.
inline Tensor gcn_forward(const Tensor& features, const Tensor& adjacency, const Linear& layer1,
                          const Linear& layer2) {
    Tensor h1 = linear_relu(matmul(adjacency, features), layer1);
    return linear_relu(matmul(adjacency, h1), layer2);
}

namespace detail {

inline EncoderOutput latent_heads(const Tensor& e, ModelParams& params) {
    EncoderOutput out;
    out.e = e;
    out.mu = linear(e, params.mlp_mu);
    out.sigma = exp(linear(e, params.mlp_logvar));  // exp keeps variances positive
    return out;
}

}  // namespace detail

// Intragroup GCN over pedestrians, group pooling, intergroup GCN over groups,
// unpooling back to pedestrians; e = e_intra ++ e_inter.
inline EncoderOutput hierarchical_forward(const Tensor& c, const GroupAssignment& groups,
                                          ModelParams& params) {
    const Tensor mask = build_intra_mask(groups);
    const Tensor a_intra = normalize_rows(mask);
    const Tensor selector = unique_rows(mask);

    Tensor e_intra = gcn_forward(c, a_intra, params.gcn_intra1, params.gcn_intra2);
    Tensor g_in = gpool(e_intra, selector);
    Tensor g_out = gcn_forward(g_in, build_inter_adjacency(selector.rows()), params.gcn_inter1,
                               params.gcn_inter2);
    Tensor e_inter = gunpool(g_out, selector);
    return detail::latent_heads(concat_cols(e_intra, e_inter), params);
}

// Ablation variant: two GCNs side by side over pedestrians, one on the group
// graph and one on its complement, both fed the raw self representation.
inline EncoderOutput parallel_forward(const Tensor& c, const GroupAssignment& groups,
                                      ModelParams& params) {
    const Tensor a_intra = normalize_rows(build_intra_mask(groups));
    Tensor e_intra = gcn_forward(c, a_intra, params.gcn_intra1, params.gcn_intra2);
    Tensor e_inter = gcn_forward(c, build_complement_adjacency(groups), params.gcn_inter1,
                                 params.gcn_inter2);
    return detail::latent_heads(concat_cols(e_intra, e_inter), params);
}

inline EncoderOutput encode(const RelativeRepresentation& rel, const GroupAssignment& groups,
                            ModelParams& params) {
    Tensor c = encode_self(rel, params);
    return params.variant == GcnVariant::parallel ? parallel_forward(c, groups, params)
                                                  : hierarchical_forward(c, groups, params);
}

// Autoregressive decoder: each step embeds the previous displacement,
// concatenates the latent code, runs the LSTM and projects to the next
// displacement. Returns [N, 2T] with step t in columns 2t, 2t+1.
inline Tensor decode(const Tensor& z, const Tensor& last_obs_disp, ModelParams& params, int horizon) {
    if (horizon < 1) throw std::invalid_argument("model: decode horizon must be >= 1");
    const std::size_t n = z.rows();
    LstmState state = lstm_zero_state(n, ModelDims::dec_hidden);
    Tensor prev = last_obs_disp;
    Tensor out;
    for (int t = 0; t < horizon; ++t) {
        Tensor emb = linear_relu(prev, params.mlp_de);
        state = lstm_step(concat_cols(z, emb), state, params.dec_lstm);
        Tensor disp = linear(state.h, params.mlp_out);
        out = (t == 0) ? disp : concat_cols(out, disp);
        prev = disp;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// k sampled future displacement sets plus the mean-driven (z = mu)
// trajectory. Each sample records the seed of its joint draw so it can be
// reproduced in isolation.
struct PredictionSet {
    std::size_t n = 0;
    int horizon = 0;
    int k = 0;
    std::vector<double> samples;          // k x N x T x 2 displacements
    std::vector<double> mean_trajectory;  // N x T x 2 displacements
    std::vector<std::uint64_t> seeds;     // per-sample joint draw seeds

    double sample_disp(int s, std::size_t i, int t, int coord) const {
        const std::size_t t_len = static_cast<std::size_t>(horizon);
        return samples[((static_cast<std::size_t>(s) * n + i) * t_len +
                        static_cast<std::size_t>(t)) * 2 + static_cast<std::size_t>(coord)];
    }
};

namespace detail {

inline void append_displacements(const Tensor& decoded, int horizon, std::vector<double>& out) {
    const std::size_t n = decoded.rows();
    const std::size_t t_len = static_cast<std::size_t>(horizon);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < t_len; ++t) {
            out.push_back(decoded.at(i, t * 2));
            out.push_back(decoded.at(i, t * 2 + 1));
        }
}

}  // namespace detail

inline PredictionSet predict(const Scene& scene, ModelParams& params, int k, double rho,
                             std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("model: predict requires k >= 1");
    validate_rho(rho);
    NoGradGuard guard;

    const RelativeRepresentation rel = compute_relative(scene);
    const EncoderOutput enc = encode(rel, scene.groups, params);
    const Tensor last_disp = last_observed_displacement(rel);

    PredictionSet pred;
    pred.n = rel.n;
    pred.horizon = rel.horizon;
    pred.k = k;
    pred.samples.reserve(static_cast<std::size_t>(k) * rel.n *
                         static_cast<std::size_t>(rel.horizon) * 2);
    for (int s = 0; s < k; ++s) {
        const std::uint64_t draw_seed = Rng::mix(seed, static_cast<std::uint64_t>(s));
        pred.seeds.push_back(draw_seed);
        Tensor eps = sample_joint(scene.groups, ModelDims::latent, rho, draw_seed);
        Tensor z = reparameterize(enc.mu, enc.sigma, eps);
        detail::append_displacements(decode(z, last_disp, params, rel.horizon), rel.horizon,
                                     pred.samples);
    }
    detail::append_displacements(decode(enc.mu, last_disp, params, rel.horizon), rel.horizon,
                                 pred.mean_trajectory);
    return pred;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Text manifest, one named tensor per block; values use shortest
// round-tripping decimal so save/load/save is byte-identical.
inline constexpr const char* kCheckpointHeader = "grouptraj-checkpoint v1";

inline std::string format_checkpoint(ModelParams& params) {
    std::string out = kCheckpointHeader;
    out += "\nvariant ";
    out += to_string(params.variant);
    out += '\n';
    params.for_each([&out](const std::string& name, Tensor& t) {
        out += "tensor ";
        out += name;
        for (std::size_t d : t.shape()) {
            out += ' ';
            out += std::to_string(d);
        }
        out += '\n';
        const auto& data = t.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (i) out += ' ';
            out += format_double(data[i]);
        }
        out += '\n';
    });
    return out;
}

inline void save_checkpoint(const std::string& path, ModelParams& params) {
    write_text_file(path, format_checkpoint(params));
}

inline ModelParams parse_checkpoint(const std::string& text, const std::string& path) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointHeader)
        throw std::runtime_error(path + ": not a checkpoint file (bad header)");
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated checkpoint");
    const auto variant_fields = split_fields(line);
    if (variant_fields.size() != 2 || variant_fields[0] != "variant")
        throw std::runtime_error(path + ": expected variant line");
    ModelParams params = init_model_params(variant_from_string(variant_fields[1]), 0);

    std::map<std::string, Tensor*> by_name;
    params.for_each([&by_name](const std::string& name, Tensor& t) { by_name[name] = &t; });
    std::set<std::string> filled;

    while (std::getline(in, line)) {
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields[0] != "tensor" || fields.size() < 3)
            throw std::runtime_error(path + ": expected tensor block, got '" + line + "'");
        const std::string& name = fields[1];
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error(path + ": unknown tensor '" + name + "'");
        std::vector<std::size_t> shape;
        for (std::size_t i = 2; i < fields.size(); ++i)
            shape.push_back(static_cast<std::size_t>(std::stoull(fields[i])));
        if (shape != it->second->shape())
            throw std::runtime_error(path + ": shape mismatch for tensor '" + name + "'");
        if (!std::getline(in, line)) throw std::runtime_error(path + ": missing values for '" + name + "'");
        const auto values = split_fields(line);
        if (values.size() != it->second->size())
            throw std::runtime_error(path + ": value count mismatch for '" + name + "'");
        for (std::size_t i = 0; i < values.size(); ++i) {
            bool ok = false;
            it->second->data()[i] = parse_double(values[i], ok);
            if (!ok) throw std::runtime_error(path + ": bad value in tensor '" + name + "'");
        }
        filled.insert(name);
    }
    if (filled.size() != by_name.size())
        throw std::runtime_error(path + ": checkpoint is missing tensors");
    return params;
}

inline ModelParams load_checkpoint(const std::string& path) {
    return parse_checkpoint(read_text_file(path), path);
}

}  // namespace grouptraj
