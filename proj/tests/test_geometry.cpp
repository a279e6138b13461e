#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "unifield/geometry.hpp"
#include "unifield/gradcheck.hpp"
#include "unifield/ops.hpp"

using namespace unifield;
using P = PointSet<double>;

TEST_CASE("farthest point sampling examples") {
    P line(4, 3);
    line << 0, 0, 0, 1, 0, 0, 2, 0, 0, 10, 0, 0;
    CHECK(farthest_point_sampling(line, 2, 0) == std::vector<Index>{0, 3});

    P square(4, 3);
    square << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
    // corner 3 is diagonal to corner 0; corners 1 and 2 then tie and the lower index wins.
    CHECK(farthest_point_sampling(square, 3, 0) == std::vector<Index>{0, 3, 1});

    std::mt19937_64 rng(1);
    P p = oracle::random_points<double>(17, rng);
    auto all = farthest_point_sampling(p, 17, 5);
    CHECK(all.front() == 5);
    std::sort(all.begin(), all.end());
    std::vector<Index> iota(17);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(all == iota);

    CHECK_THROWS_AS(farthest_point_sampling(p, 18, 0), ContractError);
    CHECK_THROWS_AS(farthest_point_sampling(p, 0, 0), ContractError);
}

TEST_CASE("farthest point sampling handles duplicate points") {
    P dup(3, 3);
    dup << 0, 0, 0, 0, 0, 0, 0, 0, 0;
    CHECK(farthest_point_sampling(dup, 3, 1) == std::vector<Index>{1, 0, 2});
}

TEST_CASE("farthest point sampling matches the exhaustive oracle") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<Index> n_dist(1, 64);
    for (int trial = 0; trial < 300; ++trial) {
        const Index n = n_dist(rng);
        P p = oracle::random_points<double>(n, rng);
        const Index k = std::uniform_int_distribution<Index>(1, n)(rng);
        const Index seed = std::uniform_int_distribution<Index>(0, n - 1)(rng);
        REQUIRE(farthest_point_sampling(p, k, seed) == oracle::fps(p, k, seed));
    }
}

TEST_CASE("knn examples") {
    P q(1, 3);
    q << 0, 0, 0;
    P r(3, 3);
    r << 1, 0, 0, 2, 0, 0, 3, 0, 0;
    auto nb = knn(q, r, 2);
    CHECK(nb.indices(0, 0) == 0);
    CHECK(nb.indices(0, 1) == 1);

    std::mt19937_64 rng(3);
    P p = oracle::random_points<double>(20, rng);
    auto self = knn(p, p, 1, true);
    for (Index i = 0; i < 20; ++i) CHECK(self.indices(i, 0) == i);

    P tie(2, 3);
    tie << 1, 0, 0, -1, 0, 0;
    auto t = knn(q, tie, 2);
    CHECK(t.indices(0, 0) == 0);
    CHECK(t.indices(0, 1) == 1);
    P tie_rev(2, 3);
    tie_rev << -1, 0, 0, 1, 0, 0;
    CHECK(knn(q, tie_rev, 1).indices(0, 0) == 0);

    CHECK_THROWS_AS(knn(q, r, 4), ContractError);
    CHECK_THROWS_AS(knn(p, p, 20, false), ContractError);
    auto excl = knn(p, p, 19, false);
    for (Index i = 0; i < 20; ++i)
        for (Index j = 0; j < 19; ++j) CHECK(excl.indices(i, j) != i);
}

TEST_CASE("knn matches brute-force sort oracle") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const Index nq = std::uniform_int_distribution<Index>(1, 64)(rng);
        const Index nr = std::uniform_int_distribution<Index>(2, 256)(rng);
        const bool self = trial % 2 == 0;
        P r = oracle::random_points<double>(nr, rng);
        P q = self ? r : oracle::random_points<double>(nq, rng);
        const Index avail = self ? nr - 1 : nr;
        const Index k = std::uniform_int_distribution<Index>(1, std::min<Index>(avail, 24))(rng);
        auto got = knn(q, r, k, !self);
        auto want = oracle::knn(q, r, k, !self);
        for (Index i = 0; i < q.rows(); ++i)
            for (Index j = 0; j < k; ++j) REQUIRE(got.indices(i, j) == want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("knn interpolation") {
    P coarse(3, 3);
    coarse << 0, 0, 0, 2, 0, 0, 0, 5, 0;
    Tensor<double> feats = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6});

    P fine(1, 3);
    fine << 2, 0, 0;
    auto y = knn_interpolate(feats, coarse, fine, 3);
    CHECK(std::abs(y[0] - 3.0) < 1e-6);
    CHECK(std::abs(y[1] - 4.0) < 1e-6);

    P mid(1, 3);
    mid << 1, 0, 0;
    auto m = knn_interpolate(feats, coarse, mid, 2);
    CHECK(std::abs(m[0] - 2.0) < 1e-12);
    CHECK(std::abs(m[1] - 3.0) < 1e-12);

    std::mt19937_64 rng(5);
    P c = oracle::random_points<double>(30, rng);
    P f = oracle::random_points<double>(50, rng);
    auto w = interpolation_weights(c, f, 3);
    for (Index i = 0; i < 50; ++i) {
        CHECK(std::abs(w.weights.row(i).sum() - 1.0) < 1e-12);
        CHECK(w.weights.row(i).minCoeff() > 0.0);
    }

    CHECK_THROWS_AS(knn_interpolate(feats, P(0, 3), fine, 1), ContractError);
}

TEST_CASE("knn interpolation permutation properties and gradient") {
    std::mt19937_64 rng(6);
    P c = oracle::random_points<double>(12, rng);
    P f = oracle::random_points<double>(9, rng);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor<double>::Vector fv(12 * 4);
    for (Index i = 0; i < fv.size(); ++i) fv[i] = u(rng);
    Tensor<double> feats({12, 4}, fv, true);
    auto base = knn_interpolate(feats, c, f, 3);

    std::vector<Index> cp(12);
    std::iota(cp.begin(), cp.end(), 0);
    std::shuffle(cp.begin(), cp.end(), rng);
    P c2(12, 3);
    for (Index i = 0; i < 12; ++i) c2.row(i) = c.row(cp[static_cast<std::size_t>(i)]);
    auto feats2 = gather_rows(feats.detach(), std::span<const Index>(cp));
    CHECK(knn_interpolate(feats2, c2, f, 3).value() == base.value());

    std::vector<Index> fp(9);
    std::iota(fp.begin(), fp.end(), 0);
    std::shuffle(fp.begin(), fp.end(), rng);
    P f2(9, 3);
    for (Index i = 0; i < 9; ++i) f2.row(i) = f.row(fp[static_cast<std::size_t>(i)]);
    auto permuted = knn_interpolate(feats, c, f2, 3);
    for (Index i = 0; i < 9; ++i)
        for (Index d = 0; d < 4; ++d) CHECK(permuted[i * 4 + d] == base[fp[static_cast<std::size_t>(i)] * 4 + d]);

    Tensor<double>::Vector wv(9 * 4);
    for (Index i = 0; i < wv.size(); ++i) wv[i] = u(rng);
    Tensor<double> weights({9, 4}, wv);
    auto r = gradcheck([&] { return sum(mul(knn_interpolate(feats, c, f, 3), weights)); }, {{"feats", feats}});
    CHECK(r.max_rel_error < 1e-6);
}
