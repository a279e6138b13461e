#include "unifield/gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "unifield/model.hpp"
#include "unifield/optim.hpp"

namespace unifield {

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    T::Vector v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    return T(std::move(shape), std::move(v), requires_grad);
}

T weighted_sum(const T& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, random_tensor(y.shape(), rng, -1.0, 1.0, false)));
}

PointSet<double> random_points(Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointSet<double> p(n, 3);
    for (Index i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) p(i, c) = u(rng);
    return p;
}

// Moves zero-initialized tensors off zero so that every path carries gradient.
void jitter(const ParameterList<double>& params, std::mt19937_64& rng, double amount = 0.3) {
    std::uniform_real_distribution<double> u(-amount, amount);
    for (const auto& [name, t] : params) {
        auto copy = t;
        for (Index i = 0; i < copy.size(); ++i) copy.mutable_value()[i] += u(rng);
    }
}

template <class Layer>
std::vector<NamedTensor> collect(const Layer& layer) {
    ParameterList<double> p;
    layer.collect(p, "p");
    return {p.begin(), p.end()};
}

} // namespace

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& options) {
    std::mt19937_64 rng(options.seed);
    std::vector<GradcheckCase> out;
    auto record = [&](const std::string& name, const std::function<T()>& loss, std::vector<NamedTensor> inputs, double tol,
                      std::size_t max_per_tensor = 0) {
        GradcheckOptions go;
        go.max_per_tensor = max_per_tensor;
        go.epsilon = 1e-4;
        go.fourth_order = true;
        const auto r = gradcheck(loss, std::move(inputs), go);
        out.push_back({name, r.max_rel_error, tol, r.checked, r.worst});
    };
    const double tol = options.op_tolerance;

    // elementwise and structural ops
    T x = random_tensor({3, 4}, rng), y = random_tensor({3, 4}, rng), c = random_tensor({4}, rng), z = random_tensor({2, 4}, rng);
    T a = random_tensor({4, 5}, rng);
    T g = random_tensor({4}, rng, 0.5, 1.5), b = random_tensor({4}, rng);
    const std::vector<Index> idx{2, 0, 2, 1, 2};
    const std::vector<NamedTensor> base{{"x", x}, {"y", y}, {"c", c}, {"z", z}};
    const std::vector<std::pair<std::string, std::function<T()>>> ops{
        {"matmul", [&] { return weighted_sum(matmul(x, a), 1); }},
        {"add", [&] { return weighted_sum(add(x, y), 2); }},
        {"sub", [&] { return weighted_sum(sub(x, y), 3); }},
        {"mul", [&] { return weighted_sum(mul(x, y), 4); }},
        {"scale", [&] { return weighted_sum(scale(x, -1.7), 5); }},
        {"add_scalar", [&] { return weighted_sum(add_scalar(x, 0.3), 6); }},
        {"neg", [&] { return weighted_sum(neg(x), 7); }},
        {"square", [&] { return weighted_sum(square(x), 8); }},
        {"abs", [&] { return weighted_sum(abs(x), 9); }},
        {"sigmoid", [&] { return weighted_sum(sigmoid(x), 10); }},
        {"tanh", [&] { return weighted_sum(tanh(x), 11); }},
        {"gelu", [&] { return weighted_sum(gelu(x), 12); }},
        {"add_channels", [&] { return weighted_sum(add_channels(x, c), 13); }},
        {"mul_channels", [&] { return weighted_sum(mul_channels(x, c), 14); }},
        {"reshape", [&] { return weighted_sum(reshape(x, {2, 6}), 15); }},
        {"concat", [&] { return weighted_sum(concat(x, z, 0), 16); }},
        {"slice", [&] { return weighted_sum(slice(x, 1, 1, 3), 17); }},
        {"gather_rows", [&] { return weighted_sum(gather_rows(x, std::span<const Index>(idx)), 18); }},
        {"sum", [&] { return sum(mul(x, y)); }},
        {"mean", [&] { return mean(square(x)); }},
        {"sum_axis", [&] { return weighted_sum(sum(x, 0), 19); }},
        {"mean_axis", [&] { return weighted_sum(mean(x, 1), 20); }},
        {"max_axis", [&] { return weighted_sum(max(x, 1), 21); }},
        {"softmax", [&] { return weighted_sum(softmax(x, 1), 22); }},
        {"layernorm", [&] { return weighted_sum(layernorm(x, g, b), 23); }},
    };
    for (const auto& [name, fn] : ops) {
        auto inputs = base;
        if (name == "matmul") inputs.emplace_back("a", a);
        if (name == "layernorm") inputs.insert(inputs.end(), {{"gain", g}, {"bias", b}});
        record(name, fn, inputs, tol);
    }

    {
        const auto pred = random_tensor({6}, rng);
        const auto target = random_tensor({6}, rng, -1, 1, false);
        record("l1_loss", [&] { return l1_loss(pred, target); }, {{"pred", pred}}, tol);
    }

    // geometry-driven ops
    const PointSet<double> coarse = random_points(6, rng), fine = random_points(10, rng), cloud = random_points(12, rng);
    {
        const auto feats = random_tensor({6, 3}, rng);
        record("knn_interpolate", [&] { return weighted_sum(knn_interpolate(feats, coarse, fine, 3), 30); }, {{"features", feats}}, tol);
    }

    // layers
    Initializer init(options.seed + 1);
    const Index d = 4;
    const auto feats = random_tensor({12, d}, rng);
    const auto nbr = knn(cloud, cloud, 5, true);
    {
        Linear<double> lin(d, 3, init);
        auto in = collect(lin);
        in.emplace_back("x", feats);
        record("linear", [&] { return weighted_sum(lin(feats), 31); }, in, tol);
    }
    {
        Mlp2<double> m(d, 6, 3, init);
        auto in = collect(m);
        in.emplace_back("x", feats);
        record("mlp", [&] { return weighted_sum(m(feats), 32); }, in, tol);
    }
    {
        Projection<double> p(d, d, init);
        auto in = collect(p);
        in.emplace_back("x", feats);
        record("projection", [&] { return weighted_sum(p(feats), 33); }, in, tol);
    }
    {
        GruParams<double> gru(d, init);
        const auto h = random_tensor({12, d}, rng);
        auto in = collect(gru);
        in.insert(in.end(), {{"h", h}, {"x", feats}});
        record("gru_cell", [&] { return weighted_sum(gru_cell(h, feats, gru), 34); }, in, tol);
    }
    {
        VectorAttentionParams<double> att(d, init);
        ParameterList<double> ps;
        att.collect(ps, "p");
        jitter(ps, rng, 0.2);
        auto in = collect(att);
        in.emplace_back("x", feats);
        record("vector_attention", [&] { return weighted_sum(vector_self_attention(feats, cloud, nbr, att), 35); }, in, tol);
    }
    {
        PointTransformerBlock<double> blk(d, 4, true, init);
        auto in = collect(blk);
        in.emplace_back("x", feats);
        record("point_transformer_block", [&] { return weighted_sum(blk(feats, cloud, nbr), 36); }, in, tol);
    }
    {
        SemanticAggregationParams<double> agg(d, 4, init);
        ParameterList<double> ps;
        agg.collect(ps, "p");
        jitter(ps, rng, 0.2);
        auto in = collect(agg);
        in.emplace_back("x", feats);
        AggregationOptions opt;
        opt.neighbors = 5;
        opt.iterations = 2;
        record("semantic_aggregation", [&] { return weighted_sum(aggregate(feats, cloud, 4, agg, opt).features, 37); }, in, tol);
    }
    {
        FlowAdapter<double> fa(d, 2, init);
        ParameterList<double> ps;
        fa.collect(ps, "p");
        jitter(ps, rng);
        const auto flow = random_tensor({2}, rng);
        auto in = collect(fa);
        in.insert(in.end(), {{"x", feats}, {"flow", flow}});
        record("flow_adapter", [&] { return weighted_sum(fca_forward(feats, flow, fa), 38); }, in, tol);
    }
    {
        AdapterBank<double> bank;
        bank.adapters.emplace(1, FlowAdapter<double>(d, 1, init));
        bank.adapters.emplace(2, FlowAdapter<double>(d, 2, init));
        ParameterList<double> ps;
        bank.collect(ps, "p");
        jitter(ps, rng);
        const auto x2 = random_tensor({7, d}, rng), f1 = random_tensor({1}, rng), f2 = random_tensor({2}, rng);
        auto in = collect(bank);
        in.insert(in.end(), {{"x1", feats}, {"x2", x2}, {"flow1", f1}, {"flow2", f2}});
        record("routed_fca", [&] {
            const auto ys = routed_fca<double>({feats, x2}, {f1, f2}, {1, 2}, bank);
            return add(weighted_sum(ys[0], 39), weighted_sum(ys[1], 40));
        }, in, tol);
    }

    // end-to-end
    {
        ModelConfig mc;
        mc.stages = options.model_stages;
        mc.base_channels = options.model_channels;
        mc.k = std::min<Index>(6, options.model_points);
        mc.seed = options.seed;
        DomainRegistry reg({synthetic_domain("cylinder"), synthetic_domain("sphere")});
        const UniFieldModel<double> model(mc, reg);
        const auto params = model.parameters();
        jitter(params, rng, 0.05);
        const PointSet<double> pts = random_points(options.model_points, rng);
        const auto w = random_tensor({options.model_points}, rng, -1, 1, false);
        record("end_to_end_model", [&] { return sum(mul(model.forward(pts, 2, {30.0, 0.5}), w)); },
               {params.begin(), params.end()}, options.model_tolerance, 12);
    }
    return out;
}

} // namespace unifield
