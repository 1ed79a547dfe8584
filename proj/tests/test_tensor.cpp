#include <doctest.h>

#include <cmath>
#include <vector>

#include "grouptraj/rng.hpp"
#include "grouptraj/tensor.hpp"

using namespace grouptraj;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, bool requires_grad = true,
                     double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::vector<double> data(detail::shape_product(shape));
    for (double& v : data) v = rng.uniform_in(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul with identity returns the other operand") {
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x = random_tensor({3, 5}, 7, false);
    Tensor y = matmul(eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("relu clamps negatives") {
    Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.5});
    Tensor y = relu(x);
    CHECK(y.data() == std::vector<double>{0.0, 0.0, 2.5});
}

TEST_CASE("concat along features") {
    Tensor a = Tensor::from_data({1, 2}, {1.0, 2.0});
    Tensor b = Tensor::from_data({1, 1}, {3.0});
    Tensor y = concat_cols(a, b);
    CHECK(y.shape() == std::vector<std::size_t>{1, 3});
    CHECK(y.data() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("shape mismatches are rejected with shapes named") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(mul(a, Tensor::zeros({2, 4})), std::invalid_argument);
    CHECK_THROWS_AS(concat_cols(a, Tensor::zeros({3, 3})), std::invalid_argument);
}

TEST_CASE("backward of sum(x*x)") {
    Tensor x = Tensor::from_data({1}, {3.0}, true);
    Tensor loss = sum(mul(x, x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of sum(A x) gives column sums") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor x = Tensor::from_data({2, 1}, {1, 1}, true);
    Tensor loss = sum(matmul(a, x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(6.0));
}

TEST_CASE("tanh gradient at zero is one") {
    Tensor x = Tensor::from_data({1}, {0.0}, true);
    sum(tanh(x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("backward requires a scalar") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("grads accumulate across backward calls until zeroed") {
    Tensor x = Tensor::from_data({1}, {3.0}, true);
    Tensor loss = sum(mul(x, x));
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0));
    x.zero_grad();
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("diamond graph sums contributions from both paths") {
    // b = x*x, c = relu(b), loss = sum(b + c); for positive b the hand value
    // is d/dx (2 x^2) = 4x.
    Tensor x = Tensor::from_data({3}, {1.5, -2.0, 0.5}, true);
    Tensor b = mul(x, x);
    Tensor loss = sum(add(b, relu(b)));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    CHECK(x.grad()[1] == doctest::Approx(-8.0));
    CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("forward results are deterministic") {
    Tensor a = random_tensor({4, 4}, 11, false);
    Tensor b = random_tensor({4, 4}, 12, false);
    Tensor y1 = matmul(tanh(a), sigmoid(b));
    Tensor y2 = matmul(tanh(a), sigmoid(b));
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("grad_check on sum of squares") {
    Tensor x = random_tensor({8}, 21);
    const double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check on a constant function") {
    Tensor x = random_tensor({4}, 22);
    const double err = grad_check([](const Tensor& t) { return scale(sum(mul(t, Tensor::zeros(t.shape()))), 1.0); }, x);
    CHECK(err == doctest::Approx(0.0));
    CHECK(x.grad() == std::vector<double>(4, 0.0));
}

TEST_CASE("every primitive passes a finite-difference check at 1e-6") {
    auto check = [](const char* name, const std::function<Tensor(const Tensor&)>& f, Tensor& x) {
        const double err = grad_check(f, x);
        INFO(name << " max relative error " << err);
        CHECK(err < 1e-6);
    };

    Tensor m = random_tensor({3, 4}, 31);
    Tensor rhs = random_tensor({4, 2}, 32, false);
    check("matmul-lhs", [&](const Tensor& t) { return sum(matmul(t, rhs)); }, m);
    Tensor lhs = random_tensor({2, 3}, 33, false);
    Tensor m2 = random_tensor({3, 4}, 34);
    check("matmul-rhs", [&](const Tensor& t) { return sum(matmul(lhs, t)); }, m2);

    Tensor other = random_tensor({3, 4}, 35, false);
    Tensor a = random_tensor({3, 4}, 36);
    check("add", [&](const Tensor& t) { return sum(mul(add(t, other), add(t, other))); }, a);
    Tensor bias = random_tensor({4}, 37);
    check("add-bias", [&](const Tensor& t) { return sum(mul(add(other, t), add(other, t))); }, bias);
    Tensor s = random_tensor({3, 4}, 38);
    check("sub", [&](const Tensor& t) { return sum(mul(sub(t, other), sub(t, other))); }, s);
    Tensor mm = random_tensor({3, 4}, 39);
    check("mul", [&](const Tensor& t) { return sum(mul(t, other)); }, mm);
    Tensor sc = random_tensor({5}, 40);
    check("scale", [&](const Tensor& t) { return sum(scale(t, -2.5)); }, sc);
    check("add_scalar", [&](const Tensor& t) { return sum(mul(add_scalar(t, 3.0), t)); }, sc);

    Tensor xr = random_tensor({10}, 41);
    check("relu", [](const Tensor& t) { return sum(relu(t)); }, xr);
    check("tanh", [](const Tensor& t) { return sum(tanh(t)); }, xr);
    check("sigmoid", [](const Tensor& t) { return sum(sigmoid(t)); }, xr);
    check("exp", [](const Tensor& t) { return sum(exp(t)); }, xr);
    check("abs", [](const Tensor& t) { return sum(abs(t)); }, xr);

    Tensor pos = random_tensor({10}, 42, true, 0.1, 1.0);
    check("log", [](const Tensor& t) { return sum(log(t)); }, pos);
    check("sqrt", [](const Tensor& t) { return sum(sqrt(t)); }, pos);

    Tensor mr = random_tensor({5, 3}, 43);
    check("mean_rows", [](const Tensor& t) { return sum(mul(mean_rows(t), mean_rows(t))); }, mr);
    Tensor cc = random_tensor({3, 2}, 44);
    Tensor cc2 = random_tensor({3, 3}, 45, false);
    check("concat_cols", [&](const Tensor& t) { return sum(mul(concat_cols(t, cc2), concat_cols(t, cc2))); }, cc);
    Tensor cr = random_tensor({2, 3}, 46);
    Tensor cr2 = random_tensor({4, 3}, 47, false);
    check("concat_rows", [&](const Tensor& t) { return sum(mul(concat_rows(t, cr2), concat_rows(t, cr2))); }, cr);
    Tensor sl = random_tensor({4, 6}, 48);
    check("slice_cols", [](const Tensor& t) { return sum(mul(slice_cols(t, 1, 3), slice_cols(t, 1, 3))); }, sl);
    check("slice_rows", [](const Tensor& t) { return sum(mul(slice_rows(t, 1, 2), slice_rows(t, 1, 2))); }, sl);
}

TEST_CASE("grad_check reports non-finite probes with the coordinate") {
    // exp overflows to inf when the probe pushes past the double range
    Tensor x = Tensor::from_data({2}, {0.5, 709.9}, true);
    CHECK_THROWS_WITH_AS(grad_check([](const Tensor& t) { return sum(exp(t)); }, x),
                         doctest::Contains("coordinate"), std::runtime_error);
}

TEST_CASE("bias broadcast add matches manual row expansion") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3}, {10, 20, 30});
    Tensor y = add(x, b);
    CHECK(y.data() == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("log rejects non-positive input") {
    CHECK_THROWS_AS(log(Tensor::from_data({2}, {1.0, 0.0})), std::invalid_argument);
}

TEST_CASE("no-grad scope suppresses provenance") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("backward pass populates grads of every reachable tensor") {
    Tensor a = random_tensor({2, 2}, 51);
    Tensor b = random_tensor({2, 2}, 52);
    Tensor mid = tanh(matmul(a, b));
    Tensor loss = sum(relu(mid));
    loss.backward();
    CHECK(a.has_grad());
    CHECK(b.has_grad());
    CHECK(mid.has_grad());
}
