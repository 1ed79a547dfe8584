#include <doctest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "grouptraj/sampler.hpp"

using namespace grouptraj;

namespace {

GroupAssignment groups_of(std::vector<int> assignment) {
    GroupAssignment ga;
    ga.group_of = std::move(assignment);
    ga.num_groups = 0;
    for (int g : ga.group_of) ga.num_groups = std::max(ga.num_groups, g + 1);
    ga.validate();
    return ga;
}

}  // namespace

TEST_CASE("sigma_g block structure") {
    CHECK(build_sigma_g({0.5, groups_of({0, 0}), 1}).data() ==
          std::vector<double>{1, 0.5, 0.5, 1});

    const Tensor id4 = build_sigma_g({0.7, groups_of({0, 1}), 2});
    CHECK(id4.data() == std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});

    const Tensor kron = build_sigma_g({0.5, groups_of({0, 0}), 2});
    CHECK(kron.data() == std::vector<double>{1, 0, 0.5, 0, 0, 1, 0, 0.5, 0.5, 0, 1, 0, 0, 0.5, 0, 1});
}

TEST_CASE("rho outside the supported range is rejected") {
    CHECK_THROWS_AS(build_sigma_g({-0.1, groups_of({0, 0}), 2}), std::invalid_argument);
    CHECK_THROWS_AS(build_sigma_g({1.5, groups_of({0, 0}), 2}), std::invalid_argument);
    CHECK_THROWS_AS(sample_joint(groups_of({0, 0}), 4, -0.2, 1), std::invalid_argument);
}

TEST_CASE("sigma_g stays positive semidefinite across the rho range") {
    // equicorrelation eigenvalues are 1 - rho and 1 + (n-1) rho
    const GroupAssignment groups = groups_of({0, 0, 0, 0, 1, 1, 2});
    for (double rho : {0.0, 0.2, 0.5, 0.9, 1.0}) {
        for (const auto& members : groups.members()) {
            const std::size_t n = members.size();
            std::vector<double> c(n * n, rho);
            for (std::size_t i = 0; i < n; ++i) c[i * n + i] = 1.0;
            CHECK_NOTHROW(detail::cholesky_psd(c, n));
            const double lo = 1.0 - rho;
            const double hi = 1.0 + (static_cast<double>(n) - 1.0) * rho;
            CHECK(lo >= 0.0);
            CHECK(hi >= 0.0);
        }
    }
}

TEST_CASE("empirical correlations match rho") {
    const std::size_t draws = 100000;
    const GroupAssignment groups = groups_of({0, 0, 1});
    auto run = [&](double rho) {
        Rng rng(42);
        double s0 = 0.0, s1 = 0.0, s00 = 0.0, s11 = 0.0, s01 = 0.0;
        double cross = 0.0, cross0 = 0.0, cross2 = 0.0;
        CorrelationSpec spec{rho, groups, 1};
        for (std::size_t i = 0; i < draws; ++i) {
            const Tensor eps = sample_epsilon(spec, rng);
            const double a = eps.data()[0], b = eps.data()[1], c = eps.data()[2];
            s0 += a;
            s1 += b;
            s00 += a * a;
            s11 += b * b;
            s01 += a * b;
            cross += a * c;
            cross0 += a;
            cross2 += c;
        }
        const double n = static_cast<double>(draws);
        const double cov = s01 / n - (s0 / n) * (s1 / n);
        const double var0 = s00 / n - (s0 / n) * (s0 / n);
        const double var1 = s11 / n - (s1 / n) * (s1 / n);
        const double cross_cov = cross / n - (cross0 / n) * (cross2 / n);
        return std::tuple{cov / std::sqrt(var0 * var1), var0, var1, cross_cov};
    };

    auto [corr0, v0a, v0b, cross0] = run(0.0);
    CHECK(std::fabs(corr0) < 0.02);
    CHECK(std::fabs(v0a - 1.0) < 0.02);
    CHECK(std::fabs(v0b - 1.0) < 0.02);
    CHECK(std::fabs(cross0) < 0.02);

    auto [corr5, v5a, v5b, cross5] = run(0.5);
    CHECK(std::fabs(corr5 - 0.5) < 0.02);
    CHECK(std::fabs(v5a - 1.0) < 0.02);
    CHECK(std::fabs(v5b - 1.0) < 0.02);
    CHECK(std::fabs(cross5) < 0.02);
}

TEST_CASE("rho one fast path replicates the group draw") {
    const GroupAssignment groups = groups_of({0, 0, 0, 1});
    const Tensor eps = sample_epsilon_rho1(groups, 4, std::uint64_t{7});
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(eps.at(0, k) == eps.at(1, k));
        CHECK(eps.at(1, k) == eps.at(2, k));
        CHECK(eps.at(0, k) != eps.at(3, k));
    }

    // all singletons reduce to independent sampling
    const GroupAssignment singles = groups_of({0, 1, 2});
    Rng a(5), b(5);
    const Tensor fast = sample_epsilon_rho1(singles, 2, a);
    std::vector<double> direct(6);
    for (double& v : direct) v = b.normal();
    CHECK(fast.data() == direct);
}

TEST_CASE("general path agrees with the fast path in the rho to one limit") {
    const GroupAssignment groups = groups_of({0, 0, 0});
    const Tensor near = sample_epsilon({1.0 - 1e-12, groups, 4}, std::uint64_t{11});
    for (std::size_t i = 1; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(std::fabs(near.at(i, k) - near.at(0, k)) < 1e-5);

    // at exactly rho = 1 the semidefinite factorization gives equality
    const Tensor exact = sample_epsilon({1.0, groups, 4}, std::uint64_t{11});
    for (std::size_t i = 1; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) CHECK(exact.at(i, k) == exact.at(0, k));

    // marginals stay standard normal on the fast path
    Rng rng(13);
    double acc = 0.0, acc2 = 0.0;
    const std::size_t draws = 100000;
    for (std::size_t i = 0; i < draws; ++i) {
        const Tensor eps = sample_epsilon_rho1(groups, 1, rng);
        acc += eps.data()[0];
        acc2 += eps.data()[0] * eps.data()[0];
    }
    const double mean = acc / static_cast<double>(draws);
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(acc2 / static_cast<double>(draws) - mean * mean - 1.0) < 0.02);
}

TEST_CASE("draws are deterministic given seed and spec") {
    const GroupAssignment groups = groups_of({0, 0, 1, 1, 1});
    const Tensor a = sample_joint(groups, 8, 0.5, 99);
    const Tensor b = sample_joint(groups, 8, 0.5, 99);
    CHECK(a.data() == b.data());
    const Tensor c = sample_joint(groups, 8, 1.0, 99);
    const Tensor d = sample_joint(groups, 8, 1.0, 99);
    CHECK(c.data() == d.data());
}

TEST_CASE("empirical covariance matches sigma_g entrywise") {
    const GroupAssignment groups = groups_of({0, 0, 1});
    const std::size_t d = 2, nd = 6;
    CorrelationSpec spec{0.5, groups, d};
    const Tensor sigma = build_sigma_g(spec);
    const std::size_t draws = 100000;
    std::vector<double> sums(nd, 0.0), prods(nd * nd, 0.0);
    Rng rng(117);
    for (std::size_t s = 0; s < draws; ++s) {
        const Tensor eps = sample_epsilon(spec, rng);
        for (std::size_t i = 0; i < nd; ++i) {
            sums[i] += eps.data()[i];
            for (std::size_t j = 0; j < nd; ++j) prods[i * nd + j] += eps.data()[i] * eps.data()[j];
        }
    }
    const double n = static_cast<double>(draws);
    for (std::size_t i = 0; i < nd; ++i)
        for (std::size_t j = 0; j < nd; ++j) {
            const double cov = prods[i * nd + j] / n - (sums[i] / n) * (sums[j] / n);
            CHECK(std::fabs(cov - sigma.at(i, j)) < 0.03);
        }
}

TEST_CASE("reparameterize basics and gradients") {
    const Tensor mu = Tensor::from_data({2, 2}, {0.5, -0.5, 1.0, 0.0}, true);
    const Tensor sigma = Tensor::from_data({2, 2}, {1.0, 2.0, 0.5, 1.5}, true);

    // eps = 0 -> z = mu
    const Tensor z0 = reparameterize(mu, sigma, Tensor::zeros({2, 2}));
    CHECK(z0.data() == mu.data());

    // mu = 0, sigma = 1 -> z = eps
    const Tensor eps = Tensor::from_data({2, 2}, {0.3, -0.7, 1.1, 0.2});
    const Tensor ze =
        reparameterize(Tensor::zeros({2, 2}, true), Tensor::filled({2, 2}, 1.0, true), eps);
    CHECK(ze.data() == eps.data());

    // d sum(z) / d mu = 1, d sum(z) / d sigma = eps / (2 sqrt(sigma))
    Tensor mu2 = Tensor::from_data({2, 2}, {0.5, -0.5, 1.0, 0.0}, true);
    Tensor sg2 = Tensor::from_data({2, 2}, {1.0, 2.0, 0.5, 1.5}, true);
    sum(reparameterize(mu2, sg2, eps)).backward();
    for (double g : mu2.grad()) CHECK(g == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(sg2.grad()[i] == doctest::Approx(eps.data()[i] / (2.0 * std::sqrt(sg2.data()[i]))));

    // finite differences through the variance head
    Tensor probe = Tensor::from_data({2, 2}, {0.8, 1.2, 0.6, 2.0}, true);
    const double err = grad_check(
        [&](const Tensor& t) {
            return sum(mul(reparameterize(mu, t, eps), reparameterize(mu, t, eps)));
        },
        probe);
    CHECK(err < 1e-6);

    CHECK_THROWS_AS(reparameterize(mu, Tensor::zeros({2, 2}), eps), std::invalid_argument);
    CHECK_THROWS_AS(reparameterize(mu, sigma, Tensor::zeros({3, 2})), std::invalid_argument);
}
