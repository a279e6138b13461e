// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "unifield/checkpoint.hpp"
#include "unifield/gradcheck_suite.hpp"
#include "unifield/training.hpp"

using namespace unifield;

namespace {

constexpr double kOpGradTol = 1e-4;
constexpr double kModelGradTol = 1e-3;
constexpr double kGradSuiteSeconds = 300;
constexpr int kOracleInstances = 1000;
constexpr double kMetricsTol = 1e-10;
constexpr double kPermutationTol = 1e-5;
constexpr double kInterpWeightTol = 1e-12;
constexpr double kSoftmaxTol = 1e-6;
constexpr double kOverfitL1 = 1e-2;
constexpr std::uint64_t kOverfitSteps = 2000;
constexpr double kOverfitSeconds = 600;
constexpr double kJointRunSeconds = 1800;
constexpr double kStandardizeTol = 1e-12;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using SampleList = std::vector<std::shared_ptr<const Sample>>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

DomainRegistry two_domains() { return DomainRegistry({synthetic_domain("cylinder"), synthetic_domain("sphere")}); }

ModelConfig tiny(Index k, std::uint64_t seed) {
    ModelConfig c;
    apply_preset(c, "tiny");
    c.k = k;
    c.seed = seed;
    return c;
}

std::shared_ptr<const Sample> synth(const std::string& domain, Index n, std::uint64_t seed, double noise) {
    SyntheticOptions o;
    o.n_points = n;
    o.seed = seed;
    o.noise_std = noise;
    return std::make_shared<const Sample>(generate_synthetic(domain, o));
}

// ---------------------------------------------------------------------------

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckSuiteOptions o;
    o.op_tolerance = kOpGradTol;
    o.model_tolerance = kModelGradTol;
    o.model_stages = 2;
    o.model_channels = 4;
    o.model_points = 32;
    const auto cases = run_gradcheck_suite(o);
    const double secs = seconds_since(t0);
    double worst_op = 0;
    std::string failed;
    for (const auto& c : cases) {
        if (c.name != "end_to_end_model") worst_op = std::max(worst_op, c.max_rel_error);
        if (!c.passed()) failed += " " + c.name;
    }
    const auto& e2e = cases.back();
    return {failed.empty() && secs < kGradSuiteSeconds,
            fmt("%zu op cases, worst op rel %.2e (< %.0e), end-to-end rel %.2e (< %.0e), %.1f s%s%s", cases.size() - 1, worst_op,
                kOpGradTol, e2e.max_rel_error, kModelGradTol, secs, failed.empty() ? "" : ", failed:", failed.c_str())};
}

Outcome oracles() {
    std::mt19937_64 rng(2024);
    int fps_bad = 0, knn_bad = 0;
    for (int t = 0; t < kOracleInstances; ++t) {
        const Index n = std::uniform_int_distribution<Index>(1, 64)(rng);
        const Index count = std::uniform_int_distribution<Index>(1, n)(rng);
        const Index seed = std::uniform_int_distribution<Index>(0, n - 1)(rng);
        auto p = oracle::random_points<double>(n, rng);
        if (t % 5 == 0) p = p.array().round().matrix();  // many exact ties
        if (farthest_point_sampling(p, count, seed) != oracle::fps(p, count, seed)) ++fps_bad;
    }
    for (int t = 0; t < kOracleInstances; ++t) {
        const Index n = std::uniform_int_distribution<Index>(2, 256)(rng);
        const bool self_query = t % 2 == 0;
        const Index nq = self_query ? n : std::uniform_int_distribution<Index>(1, 64)(rng);
        const bool include_self = !self_query || t % 4 == 0;
        const Index k = std::uniform_int_distribution<Index>(1, include_self ? n : n - 1)(rng);
        auto r = oracle::random_points<double>(n, rng);
        if (t % 7 == 0) r = (r * 2).array().round().matrix();
        const auto q = self_query ? r : oracle::random_points<double>(nq, rng);
        const auto got = knn(q, r, k, include_self);
        const auto want = oracle::knn(q, r, k, include_self);
        bool same = got.k() == k && got.queries() == nq;
        for (Index i = 0; same && i < nq; ++i)
            for (Index j = 0; j < k; ++j) same = same && got.indices(i, j) == want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (!same) ++knn_bad;
    }
    double metrics_err = 0;
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < kOracleInstances; ++t) {
        const Index n = std::uniform_int_distribution<Index>(1, 300)(rng);
        Eigen::VectorXd p(n), y(n);
        for (Index i = 0; i < n; ++i) p[i] = u(rng), y[i] = u(rng);
        double se = 0, ae = 0, d2 = 0, t2 = 0, d1 = 0, t1 = 0;
        for (Index i = 0; i < n; ++i) {
            const double d = p[i] - y[i];
            se += d * d, ae += std::abs(d), d2 += d * d, t2 += y[i] * y[i], d1 += std::abs(d), t1 += std::abs(y[i]);
        }
        const auto m = compute_metrics(p, y);
        metrics_err = std::max({metrics_err, std::abs(m.mse - se / double(n)), std::abs(m.mae - ae / double(n)),
                                std::abs(m.rel_l2 - 100 * std::sqrt(d2) / std::sqrt(t2)), std::abs(m.rel_l1 - 100 * d1 / t1)});
    }
    return {fps_bad == 0 && knn_bad == 0 && metrics_err < kMetricsTol,
            fmt("fps %d/%d mismatches (N<=64), knn %d/%d mismatches (N<=256), metrics max err %.1e (< %.0e)", fps_bad, kOracleInstances,
                knn_bad, kOracleInstances, metrics_err, kMetricsTol)};
}

Outcome invariances() {
    const UniFieldModel<float> m(tiny(16, 5), two_domains());
    std::mt19937_64 rng(11);
    double perm_err = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const Index n = 256;
        const PointSet<float> p = synth(trial % 2 ? "cylinder" : "sphere", n, 40 + trial, 0)->points.cast<float>();
        std::vector<Index> perm(n);
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        PointSet<float> q(n, 3);
        for (Index i = 0; i < n; ++i) q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
        const DomainId d = trial % 2 ? 1 : 2;
        const std::vector<double> flow = d == 1 ? std::vector<double>{31.0} : std::vector<double>{22.0, 0.3};
        const auto a = m.forward(p, d, flow), b = m.forward(q, d, flow);
        for (Index i = 0; i < n; ++i) perm_err = std::max(perm_err, double(std::abs(b[i] - a[perm[static_cast<std::size_t>(i)]])));
    }
    double weight_err = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index nc = std::uniform_int_distribution<Index>(1, 40)(rng), nf = std::uniform_int_distribution<Index>(1, 80)(rng);
        const auto coarse = oracle::random_points<double>(nc, rng);
        auto fine = oracle::random_points<double>(nf, rng);
        fine.row(0) = coarse.row(0);  // a fine point sitting on a coarse point
        const auto w = interpolation_weights(coarse, fine, std::min<Index>(3, nc));
        weight_err = std::max(weight_err, (w.weights.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
    double softmax_err = 0;
    std::uniform_real_distribution<float> logit(-30.f, 30.f);
    for (int trial = 0; trial < 200; ++trial) {
        const Index rows = 1 + trial % 9, cols = 1 + trial % 23;
        Tensor<float>::Vector v(rows * cols);
        for (Index i = 0; i < v.size(); ++i) v[i] = logit(rng);
        const auto s = softmax(Tensor<float>({rows, cols}, v), 1);
        for (Index r = 0; r < rows; ++r) {
            double sum = 0;
            for (Index c = 0; c < cols; ++c) sum += s.value()[r * cols + c];
            softmax_err = std::max(softmax_err, std::abs(sum - 1.0));
        }
    }
    return {perm_err < kPermutationTol && weight_err < kInterpWeightTol && softmax_err < kSoftmaxTol,
            fmt("permutation max diff %.2e (< %.0e, float32), interpolation weight sum err %.1e (< %.0e), softmax row sum err %.1e (< %.0e)",
                perm_err, kPermutationTol, weight_err, kInterpWeightTol, softmax_err, kSoftmaxTol)};
}

Outcome routing() {
    auto reg = two_domains();
    // a third, idle domain: nothing in the batch routes to it
    DomainSpec idle = synthetic_domain("sphere");
    idle.id = 3;
    idle.name = "idle";
    idle.flow_dim = 3;
    idle.condition_names = {"a", "b", "c"};
    idle.condition_units = {"1", "1", "1"};
    reg.merge(idle);
    const UniFieldModel<double> m(tiny(8, 9), reg);
    auto params = m.parameters();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& [name, t] : params)  // adapters off their zero start so routing is observable
        if (UniFieldModel<double>::is_adapter(name))
            for (Index i = 0; i < t.size(); ++i) t.mutable_value()[i] += u(rng);

    const std::vector<Sample> batch{*synth("cylinder", 48, 1, 0.01), *synth("sphere", 48, 2, 0.01), *synth("cylinder", 48, 3, 0.01),
                                    *synth("sphere", 48, 4, 0.01)};
    for (auto& [n, t] : params) t.zero_grad();
    batch_loss(m, batch).first.backward();
    bool idle_zero = true, active_nonzero = true;
    for (const auto& [name, t] : params) {
        if (UniFieldModel<double>::is_adapter_of(name, 3)) idle_zero = idle_zero && t.grad_or_zero().isZero(0);
        if (UniFieldModel<double>::is_adapter_of(name, 1) || UniFieldModel<double>::is_adapter_of(name, 2))
            active_nonzero = active_nonzero && !t.grad_or_zero().isZero(0);
    }

    // per-sample: each sample's output gradient never reaches the other domain's adapters
    bool cross_zero = true;
    for (const auto& s : batch) {
        for (auto& [n, t] : params) t.zero_grad();
        sum(m.forward(s)).backward();
        const DomainId other = s.domain == 1 ? 2 : 1;
        for (const auto& [name, t] : params)
            if (UniFieldModel<double>::is_adapter_of(name, other) || UniFieldModel<double>::is_adapter_of(name, 3))
                cross_zero = cross_zero && t.grad_or_zero().isZero(0);
    }

    // batch outputs (in mixed order, with grad) vs each sample evaluated alone
    std::vector<Eigen::VectorXd> in_batch;
    for (const auto& s : batch) in_batch.push_back(m.forward(s).value());
    bool bitwise = true;
    for (std::size_t b = batch.size(); b-- > 0;) {
        NoGradGuard g;
        bitwise = bitwise && m.forward(batch[b]).value() == in_batch[b];
    }
    return {idle_zero && active_nonzero && cross_zero && bitwise,
            fmt("inactive-domain adapter grads exactly zero: %s, cross-domain per-sample grads zero: %s, active adapters reached: %s, "
                "batch vs isolated outputs bitwise: %s",
                idle_zero ? "yes" : "no", cross_zero ? "yes" : "no", active_nonzero ? "yes" : "no", bitwise ? "yes" : "no")};
}

Outcome zero_init() {
    bool same = true;
    std::size_t checks = 0;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-100, 100);
    for (std::uint64_t seed : {0, 1, 2}) {
        auto reg = two_domains();
        // arbitrary fitted standardization must not matter either
        reg.mutable_at(1).flow_mean = {30.0};
        reg.mutable_at(1).flow_std = {11.0};
        const UniFieldModel<float> mf(tiny(16, seed), reg);
        const UniFieldModel<double> md(tiny(16, seed), reg);
        for (DomainId d : {1, 2}) {
            const auto s = synth(d == 1 ? "cylinder" : "sphere", 200, seed + 7, 0);
            const auto base_f = mf.forward(s->points.cast<float>(), d, s->flow).value();
            const auto base_d = md.forward(s->points, d, s->flow).value();
            for (int t = 0; t < 4; ++t) {
                std::vector<double> flow(s->flow.size());
                for (auto& v : flow) v = u(rng);
                same = same && mf.forward(s->points.cast<float>(), d, flow).value() == base_f;
                same = same && md.forward(s->points, d, flow).value() == base_d;
                checks += 2;
            }
        }
    }
    return {same, fmt("%zu fresh-model forwards with random flows, all bitwise identical to the reference: %s", checks, same ? "yes" : "no")};
}

Outcome overfit() {
    auto reg = two_domains();
    const auto s = synth("cylinder", 256, 0, 0.0);
    fit_flow_standardization(reg, {s});
    UniFieldModel<float> m(tiny(16, 0), reg);
    TrainOptions t;
    t.steps = kOverfitSteps;
    t.batch_size = 1;
    t.points_per_sample = 256;
    t.adam.lr = 3e-3;
    t.log_every = 0;
    Adam<float> adam(m.parameters(), t.adam);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(m, adam, {s}, {}, t);
    const double secs = seconds_since(t0);
    const double l1 = evaluate(m, {s}).overall.mean.mae;
    return {l1 < kOverfitL1 && secs < kOverfitSeconds && r.losses.back() < r.losses.front(),
            fmt("L1 after %llu steps %.4f (< %.0e), first-step loss %.3f, %.0f s (< %.0f s)", (unsigned long long)kOverfitSteps, l1, kOverfitL1,
                r.losses.front(), secs, kOverfitSeconds)};
}

struct RunResult {
    MetricsSummary sphere_test;
    double seconds = 0;
};

RunResult joint_or_single(bool joint, std::uint64_t seed) {
    constexpr Index n = 128;
    constexpr double noise = 0.02;
    SampleList train_set, test_set;
    if (joint)
        for (int i = 0; i < 200; ++i) train_set.push_back(synth("cylinder", n, 1000 + i, noise));
    for (int i = 0; i < 5; ++i) train_set.push_back(synth("sphere", n, 2000 + i, noise));
    for (int i = 0; i < 20; ++i) test_set.push_back(synth("sphere", n, 3000 + i, noise));
    auto reg = two_domains();
    fit_flow_standardization(reg, train_set);
    UniFieldModel<float> m(tiny(16, seed), reg);
    TrainOptions t;
    t.steps = 2000;
    t.batch_size = 4;
    t.points_per_sample = n;
    t.adam.lr = 3e-3;
    t.log_every = 0;
    t.seed = seed;
    Adam<float> adam(m.parameters(), t.adam);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(m, adam, balance_domains(train_set), test_set, t);
    return {r.last_eval->per_domain.at(2), seconds_since(t0)};
}

Outcome joint_vs_single() {
    double joint_mean = 0, single_mean = 0, slowest = 0;
    std::printf("  %-6s %-6s %-10s %-10s %-10s %-10s %s\n", "seed", "cond", "MSE", "MAE", "RelL2%", "RelL1%", "secs");
    for (std::uint64_t seed : {0, 1, 2}) {
        for (bool joint : {true, false}) {
            const auto r = joint_or_single(joint, seed);
            const auto& s = r.sphere_test.mean;
            std::printf("  %-6llu %-6s %-10.4f %-10.4f %-10.2f %-10.2f %.0f\n", (unsigned long long)seed, joint ? "joint" : "single", s.mse,
                        s.mae, s.rel_l2, s.rel_l1, r.seconds);
            std::fflush(stdout);
            (joint ? joint_mean : single_mean) += s.mae / 3;
            slowest = std::max(slowest, r.seconds);
        }
    }
    return {joint_mean <= single_mean && slowest < kJointRunSeconds,
            fmt("sphere-test MAE seed mean: joint %.4f, single %.4f (joint <= single required), slowest run %.0f s (< %.0f s)", joint_mean,
                single_mean, slowest, kJointRunSeconds)};
}

Outcome chunking() {
    const auto groups = UniFieldModel<float>::chunk_groups(32768, 8192, 0);
    bool structural = groups.size() == 4;
    std::vector<Index> all;
    for (const auto& g : groups) {
        structural = structural && g.size() == 8192;
        all.insert(all.end(), g.begin(), g.end());
    }
    std::sort(all.begin(), all.end());
    for (Index i = 0; structural && i < 32768; ++i) structural = all[static_cast<std::size_t>(i)] == i;

    NoGradGuard ng;
    const UniFieldModel<float> m(tiny(16, 4), two_domains());
    constexpr Index n = 2048;
    const auto s = synth("sphere", n, 77, 0);
    const PointSet<float> p = s->points.cast<float>();
    const auto whole = m.predict_chunked(p, 2, s->flow, n, 5);
    const bool full_equal = whole.value() == m.forward(p, 2, s->flow).value();
    const auto quarter = m.predict_chunked(p, 2, s->flow, n / 4, 5);
    bool aligned = quarter.shape() == Shape{n} && whole.shape() == Shape{n};
    const auto qgroups = UniFieldModel<float>::chunk_groups(n, n / 4, 5);
    aligned = aligned && qgroups.size() == 4;
    for (const auto& g : qgroups) {
        PointSet<float> sub(static_cast<Index>(g.size()), 3);
        for (std::size_t i = 0; i < g.size(); ++i) sub.row(static_cast<Index>(i)) = p.row(g[i]);
        const auto y = m.forward(sub, 2, s->flow);
        for (std::size_t i = 0; i < g.size(); ++i) aligned = aligned && y[static_cast<Index>(i)] == quarter[g[i]];
    }
    const double diff = (whole.value() - quarter.value()).cwiseAbs().maxCoeff();
    return {structural && full_equal && aligned,
            fmt("32768 -> 4 x 8192 partition: %s, chunk=N equals forward bitwise: %s, chunk=N/4 length and index alignment exact: %s "
                "(grouping-only max diff %.3f)",
                structural ? "yes" : "no", full_equal ? "yes" : "no", aligned ? "yes" : "no", diff)};
}

Outcome checkpoint_round_trip() {
    const auto dir = std::filesystem::temp_directory_path() / "unifield_acceptance";
    std::filesystem::create_directories(dir);
    auto reg = two_domains();
    SampleList set{synth("cylinder", 64, 1, 0.02), synth("sphere", 64, 2, 0.02), synth("sphere", 64, 3, 0.02)};
    fit_flow_standardization(reg, set);
    bool ok = true;
    auto run = [&]<class Scalar>(Scalar) {
        ModelConfig c = tiny(8, 2);
        c.dtype = std::is_same_v<Scalar, float> ? "float32" : "float64";
        UniFieldModel<Scalar> m(c, reg);
        TrainOptions t;
        t.steps = 5;
        t.batch_size = 2;
        t.points_per_sample = 64;
        t.log_every = 0;
        Adam<Scalar> adam(m.parameters(), t.adam);
        train(m, adam, set, {}, t);
        const auto before = evaluate(m, set, 32, 1);
        save_checkpoint(dir / "ck.bin", m, 5, &adam);
        const auto ck = load_checkpoint<Scalar>(dir / "ck.bin");
        const auto after = evaluate(*ck.model, set, 32, 1);
        auto same = [](const MetricsSummary& a, const MetricsSummary& b) {
            return a.mean.mse == b.mean.mse && a.mean.mae == b.mean.mae && a.mean.rel_l2 == b.mean.rel_l2 && a.mean.rel_l1 == b.mean.rel_l1;
        };
        ok = ok && same(before.overall, after.overall);
        for (const auto& [d, s] : before.per_domain) ok = ok && same(s, after.per_domain.at(d));
    };
    run(float{});
    run(double{});
    std::filesystem::remove_all(dir);
    return {ok, fmt("float32 and float64 save -> load -> eval metrics bitwise equal: %s", ok ? "yes" : "no")};
}

Outcome standardization() {
    constexpr double mean = -94.5, std = 117.25;
    const bool exact_zero = standardize_pressure(-94.5, mean, std) == 0.0;
    DomainSpec spec = synthetic_domain("cylinder");
    spec.pressure_mode = PressureMode::Affine;
    spec.pressure_mean = mean;
    spec.pressure_std = std;
    const DomainRegistry reg({spec});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2000, 2000);
    double err = 0;
    for (int i = 0; i < 100000; ++i) {
        const double p = u(rng);
        err = std::max(err, std::abs(destandardize_pressure(standardize_pressure(p, mean, std), mean, std) - p));
        err = std::max(err, std::abs(reg.target_to_pressure(1, reg.pressure_to_target(1, p)) - p));
    }
    const bool registry_zero = reg.pressure_to_target(1, -94.5) == 0.0;
    return {exact_zero && registry_zero && err < kStandardizeTol,
            fmt("-94.5 -> %g exactly, round trip max err %.1e (< %.0e)", standardize_pressure(-94.5, mean, std), err, kStandardizeTol)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradients},
        {"oracle equivalence", oracles},
        {"equivariance and invariance", invariances},
        {"routing isolation", routing},
        {"zero-init flow invariance", zero_init},
        {"overfit convergence", overfit},
        {"joint vs single domain", joint_vs_single},
        {"chunked inference", chunking},
        {"checkpoint round trip", checkpoint_round_trip},
        {"pressure standardization", standardization},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
