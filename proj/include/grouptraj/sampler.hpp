#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouptraj/groups.hpp"
#include "grouptraj/rng.hpp"
#include "grouptraj/tensor.hpp"

namespace grouptraj {

// Group-correlated latent sampling. The joint noise for all pedestrians is
// drawn from N(0, Sigma_g) with Sigma_g = C (x) I_D, where C has ones on the
// diagonal, rho for same-group pairs and zero across groups. The Kronecker
// structure means cross-group blocks vanish, so sampling factors per group.

struct CorrelationSpec {
    double rho = 1.0;
    GroupAssignment groups;
    std::size_t latent_dim = 8;
};

inline void validate_rho(double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw std::invalid_argument("sampler: rho must lie in [0, 1], got " + std::to_string(rho));
    }
}

// Dense (N*D) x (N*D) covariance, C (x) I_D. Mostly a test oracle; sampling
// never materializes it.
inline Tensor build_sigma_g(const CorrelationSpec& spec) {
    validate_rho(spec.rho);
    spec.groups.validate();
    const std::size_t n = spec.groups.num_pedestrians();
    const std::size_t d = spec.latent_dim;
    // PSD condition for the largest group: eigenvalue 1 - rho >= 0 and
    // 1 + (n_g - 1) rho >= 0; for rho in [0,1] both hold automatically.
    Tensor sigma = Tensor::zeros({n * d, n * d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double c;
            if (i == j) {
                c = 1.0;
            } else if (spec.groups.group_of[i] == spec.groups.group_of[j]) {
                c = spec.rho;
            } else {
                c = 0.0;
            }
            if (c == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) sigma.at(i * d + k, j * d + k) = c;
        }
    return sigma;
}

namespace detail {

// Cholesky factor of a symmetric positive semidefinite matrix (row-major,
// n x n). Zero pivots are tolerated so the equicorrelation matrix at rho = 1
// factors cleanly; genuinely indefinite input is rejected.
inline std::vector<double> cholesky_psd(const std::vector<double>& a, std::size_t n) {
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (s < -1e-10)
                    throw std::runtime_error("sampler: covariance is not positive semidefinite");
                l[i * n + i] = s > 0.0 ? std::sqrt(s) : 0.0;
            } else {
                l[i * n + j] = l[j * n + j] > 0.0 ? s / l[j * n + j] : 0.0;
            }
        }
    }
    return l;
}

}  // namespace detail

// Joint draw with N(0,1) marginals and within-group correlation rho. Factors
// the per-group equicorrelation matrix C_n = (1-rho) I + rho 11^T through its
// Cholesky factor L and maps iid gaussians G through it: block = L G.
inline Tensor sample_epsilon(const CorrelationSpec& spec, Rng& rng) {
    validate_rho(spec.rho);
    spec.groups.validate();
    const std::size_t n = spec.groups.num_pedestrians();
    const std::size_t d = spec.latent_dim;
    Tensor eps = Tensor::zeros({n, d});
    for (const auto& members : spec.groups.members()) {
        const std::size_t gn = members.size();
        std::vector<double> c(gn * gn, spec.rho);
        for (std::size_t i = 0; i < gn; ++i) c[i * gn + i] = 1.0;
        const std::vector<double> l = detail::cholesky_psd(c, gn);
        std::vector<double> g(gn * d);
        for (double& v : g) v = rng.normal();
        for (std::size_t i = 0; i < gn; ++i) {
            const std::size_t row = static_cast<std::size_t>(members[i]);
            for (std::size_t k = 0; k < d; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j <= i; ++j) s += l[i * gn + j] * g[j * d + k];
                eps.at(row, k) = s;
            }
        }
    }
    return eps;
}

inline Tensor sample_epsilon(const CorrelationSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return sample_epsilon(spec, rng);
}

// rho = 1 fast path: one independent vector per group, replicated to every
// member. Within-group rows are bit-identical by construction.
inline Tensor sample_epsilon_rho1(const GroupAssignment& groups, std::size_t latent_dim, Rng& rng) {
    groups.validate();
    const std::size_t m = static_cast<std::size_t>(groups.num_groups);
    std::vector<double> group_draw(m * latent_dim);
    for (double& v : group_draw) v = rng.normal();
    Tensor eps = Tensor::zeros({groups.num_pedestrians(), latent_dim});
    for (std::size_t i = 0; i < groups.num_pedestrians(); ++i) {
        const std::size_t g = static_cast<std::size_t>(groups.group_of[i]);
        for (std::size_t k = 0; k < latent_dim; ++k) eps.at(i, k) = group_draw[g * latent_dim + k];
    }
    return eps;
}

inline Tensor sample_epsilon_rho1(const GroupAssignment& groups, std::size_t latent_dim,
                                  std::uint64_t seed) {
    Rng rng(seed);
    return sample_epsilon_rho1(groups, latent_dim, rng);
}

// Dispatcher used by prediction and training: exact rho = 1 takes the
// replication path, everything else the per-group Cholesky path.
inline Tensor sample_joint(const GroupAssignment& groups, std::size_t latent_dim, double rho,
                           std::uint64_t seed) {
    validate_rho(rho);
    if (rho == 1.0) return sample_epsilon_rho1(groups, latent_dim, seed);
    CorrelationSpec spec{rho, groups, latent_dim};
    return sample_epsilon(spec, seed);
}

// z = mu + sqrt(Sigma) o eps, differentiable in mu and Sigma; eps enters as a
// constant (the reparameterization trick).
inline Tensor reparameterize(const Tensor& mu, const Tensor& sigma, const Tensor& eps) {
    if (mu.shape() != sigma.shape() || mu.shape() != eps.shape()) {
        throw std::invalid_argument("sampler: reparameterize shape mismatch mu " +
                                    detail::shape_str(mu.shape()) + ", sigma " +
                                    detail::shape_str(sigma.shape()) + ", eps " +
                                    detail::shape_str(eps.shape()));
    }
    for (double v : sigma.data()) {
        if (!(v > 0.0))
            throw std::invalid_argument("sampler: reparameterize requires strictly positive variances");
    }
    Tensor eps_const = Tensor::from_data(eps.shape(), eps.data(), false);
    return add(mu, mul(sqrt(sigma), eps_const));
}

}  // namespace grouptraj
