#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "unifield/gradcheck.hpp"
#include "unifield/ops.hpp"

using namespace unifield;
using T = Tensor<double>;

namespace {

T random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    T::Vector v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    return T(std::move(shape), std::move(v), requires_grad);
}

// Random-weighted sum keeps the loss O(1) and exercises every output element.
T weighted_sum(const T& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, random_tensor(y.shape(), rng, false)));
}

} // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(T(Shape{2, 3}, T::Vector::Zero(5)), DimensionError);
    T t = T::zeros({2, 3});
    CHECK(t.size() == 6);
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("matmul") {
    T eye = T::from({2, 2}, {1, 0, 0, 1});
    T b = T::from({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, b).value() == b.value());

    T row = T::from({1, 2}, {1, 2});
    T col = T::from({2, 1}, {3, 4});
    CHECK(matmul(row, col).item() == 11.0);

    try {
        matmul(T::zeros({2, 3}), T::zeros({2, 3}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }

    std::mt19937_64 rng(7);
    T a = random_tensor({3, 4}, rng);
    T c = random_tensor({4, 2}, rng);
    auto r = gradcheck([&] { return weighted_sum(matmul(a, c), 1); }, {{"A", a}, {"B", c}});
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax") {
    T u = softmax(T::from({3}, {0, 0, 0}), 0);
    for (Index i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    T logs = softmax(T::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
    CHECK(std::abs(logs[0] - 1.0 / 6) < 1e-15);
    CHECK(std::abs(logs[1] - 2.0 / 6) < 1e-15);
    CHECK(std::abs(logs[2] - 3.0 / 6) < 1e-15);

    std::mt19937_64 rng(3);
    T x = random_tensor({4, 5, 3}, rng, false, -5, 5);
    for (int axis = 0; axis < 3; ++axis) {
        T a = softmax(x, axis);
        T b = softmax(add_scalar(x, 123.25), axis);
        CHECK((a.value() - b.value()).cwiseAbs().maxCoeff() < 1e-12);
        T s = sum(a, axis);
        CHECK((s.value().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(a.value().minCoeff() >= 0.0);
    }
    CHECK_THROWS_AS(softmax(x, 3), ContractError);
}

TEST_CASE("layernorm") {
    T gain = T::full({3}, 1.0);
    T bias = T::zeros({3});
    T c = layernorm(T::from({1, 3}, {5, 5, 5}), gain, bias);
    CHECK(c.value().cwiseAbs().maxCoeff() == 0.0);

    T y = layernorm(T::from({1, 2}, {1, 3}), T::full({2}, 1.0), T::zeros({2}));
    CHECK(std::abs(y[0] + 1.0) < 1e-4);
    CHECK(std::abs(y[1] - 1.0) < 1e-4);

    std::mt19937_64 rng(11);
    T x = random_tensor({4, 5}, rng);
    T g = random_tensor({5}, rng);
    T b = random_tensor({5}, rng);
    auto r = gradcheck([&] { return weighted_sum(layernorm(x, g, b), 2); }, {{"x", x}, {"gain", g}, {"bias", b}});
    CHECK(r.max_rel_error < 1e-5);

    T x3 = random_tensor({2, 4, 3}, rng);
    T g4 = random_tensor({4}, rng);
    T b4 = random_tensor({4}, rng);
    auto r1 = gradcheck([&] { return weighted_sum(layernorm(x3, g4, b4, 1), 3); }, {{"x", x3}, {"gain", g4}, {"bias", b4}});
    CHECK(r1.max_rel_error < 1e-5);
    CHECK_THROWS_AS(layernorm(x, T::zeros({4}), b), DimensionError);
}

TEST_CASE("gelu") {
    T y = gelu(T::from({3}, {0.0, 10.0, 1.0}));
    CHECK(y[0] == 0.0);
    CHECK(std::abs(y[1] - 10.0) < 1e-6);
    const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
    CHECK(std::abs(y[2] - phi1) < 1e-15);
    CHECK(std::abs(y[2] - 0.8413447) < 1e-7);
}

TEST_CASE("backward contract") {
    T x = T::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    sum(x).backward();
    CHECK(x.grad() == T::Vector::Ones(6));

    T v = T::from({2}, {1, 2}, true);
    scale(mean(square(v)), 0.5).backward();
    CHECK(v.grad()[0] == 0.5);
    CHECK(v.grad()[1] == 1.0);

    CHECK_THROWS_AS(square(v).backward(), ContractError);

    std::mt19937_64 rng(5);
    T a = random_tensor({3, 4}, rng);
    T w = random_tensor({4, 2}, rng);
    auto r = gradcheck([&] { return sum(gelu(matmul(a, w))); }, {{"A", a}, {"W", w}});
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("every differentiable op passes finite differences") {
    std::mt19937_64 rng(2024);
    T x = random_tensor({3, 4}, rng);
    T y = random_tensor({3, 4}, rng);
    T c = random_tensor({4}, rng);
    T z = random_tensor({2, 4}, rng);
    const std::vector<Index> idx{2, 0, 2, 1, 2};

    struct Case {
        const char* name;
        std::function<T()> fn;
    };
    const std::vector<Case> cases{
        {"add", [&] { return weighted_sum(add(x, y), 1); }},
        {"sub", [&] { return weighted_sum(sub(x, y), 2); }},
        {"mul", [&] { return weighted_sum(mul(x, y), 3); }},
        {"scale", [&] { return weighted_sum(scale(x, -1.7), 4); }},
        {"add_scalar", [&] { return weighted_sum(add_scalar(x, 0.3), 5); }},
        {"square", [&] { return weighted_sum(square(x), 6); }},
        {"sigmoid", [&] { return weighted_sum(sigmoid(x), 7); }},
        {"tanh", [&] { return weighted_sum(tanh(x), 8); }},
        {"gelu", [&] { return weighted_sum(gelu(x), 9); }},
        {"add_channels", [&] { return weighted_sum(add_channels(x, c), 10); }},
        {"mul_channels", [&] { return weighted_sum(mul_channels(x, c), 11); }},
        {"concat0", [&] { return weighted_sum(concat(x, z, 0), 12); }},
        {"concat1", [&] { return weighted_sum(concat(x, y, 1), 13); }},
        {"slice", [&] { return weighted_sum(slice(x, 1, 1, 3), 14); }},
        {"gather_rows", [&] { return weighted_sum(gather_rows(x, std::span<const Index>(idx)), 15); }},
        {"sum_axis0", [&] { return weighted_sum(sum(x, 0), 16); }},
        {"mean_axis1", [&] { return weighted_sum(mean(x, 1), 17); }},
        {"max_axis1", [&] { return weighted_sum(max(x, 1), 18); }},
        {"softmax0", [&] { return weighted_sum(softmax(x, 0), 19); }},
        {"softmax1", [&] { return weighted_sum(softmax(x, 1), 20); }},
        {"reshape", [&] { return weighted_sum(reshape(x, {2, 6}), 21); }},
        {"mean", [&] { return mean(square(x)); }},
        {"abs", [&] { return weighted_sum(abs(x), 22); }},
    };
    for (const auto& tc : cases) {
        auto r = gradcheck(tc.fn, {{"x", x}, {"y", y}, {"c", c}, {"z", z}});
        INFO(tc.name << " worst " << r.worst << " rel " << r.max_rel_error);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("gather then scatter accumulates index multiplicity") {
    T x = T::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    const std::vector<Index> idx{2, 0, 2, 2};
    sum(gather_rows(x, std::span<const Index>(idx))).backward();
    CHECK(x.grad() == (T::Vector(6) << 1, 1, 0, 0, 3, 3).finished());
    CHECK_THROWS_AS(gather_rows(x, std::span<const Index>(std::vector<Index>{3})), ContractError);
}

TEST_CASE("forward and backward are bitwise deterministic") {
    auto run = [] {
        std::mt19937_64 rng(99);
        T a = random_tensor({8, 6}, rng);
        T w = random_tensor({6, 5}, rng);
        T g = random_tensor({5}, rng);
        T b = random_tensor({5}, rng);
        T y = softmax(layernorm(gelu(matmul(a, w)), g, b), 0);
        T loss = weighted_sum(y, 42);
        loss.backward();
        return std::make_tuple(loss.item(), a.grad(), w.grad(), g.grad());
    };
    CHECK(run() == run());
}

TEST_CASE("no-grad mode records nothing") {
    T x = T::from({2}, {1, 2}, true);
    NoGradGuard guard;
    T y = square(x);
    CHECK_FALSE(y.requires_grad());
}
