#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "unifield/checkpoint.hpp"
#include "unifield/datasets.hpp"
#include "unifield/errors.hpp"
#include "unifield/gradcheck_suite.hpp"
#include "unifield/run_config.hpp"
#include "unifield/training.hpp"

namespace fs = std::filesystem;
using namespace unifield;

namespace {

enum Exit : int { kOk = 0, kOther = 1, kUsage = 2, kConfig = 3, kData = 4, kNumerical = 5 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenArgs {
    std::vector<std::string> domains;
    std::size_t count = 10;
    std::size_t test_count = 0;
    Index n_points = 1024;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "text";
    bool flow_sensitive = false;
};

int cmd_gen(const GenArgs& a) {
    std::vector<DomainSpec> specs;
    for (const auto& d : a.domains) {
        if (d != "cylinder" && d != "sphere") throw UsageError("unknown synthetic domain '" + d + "' (expected cylinder or sphere)");
        specs.push_back(synthetic_domain(d));
    }
    const auto fmt = a.format == "binary" ? SampleFormat::Binary : SampleFormat::Text;
    if (a.format != "text" && a.format != "binary") throw UsageError("--format must be text or binary");
    const fs::path out = a.out;
    fs::create_directories(out);

    Manifest m;
    m.name = "synthetic";
    m.domains = specs;
    m.directory = out;
    const std::string ext = fmt == SampleFormat::Binary ? ".bin" : ".txt";
    for (std::size_t di = 0; di < a.domains.size(); ++di) {
        const auto& name = a.domains[di];
        for (Split split : {Split::Train, Split::Test}) {
            const std::size_t n = split == Split::Train ? a.count : a.test_count;
            for (std::size_t i = 0; i < n; ++i) {
                SyntheticOptions o;
                o.n_points = a.n_points;
                o.noise_std = a.noise;
                o.flow_sensitive = a.flow_sensitive;
                // disjoint seed blocks per (domain, split)
                o.seed = a.seed * 1000003ULL + (di * 2 + (split == Split::Test ? 1 : 0)) * 100000ULL + i;
                const Sample s = generate_synthetic(name, o);
                char file[96];
                std::snprintf(file, sizeof file, "%s_%s_%05zu", name.c_str(), to_string(split).c_str(), i);
                const fs::path rel = std::string(file) + ext;
                save_sample(s, out / rel, fmt);
                m.entries.push_back({rel, s.domain, s.flow, split});
            }
        }
    }
    save_manifest(m, out / "manifest.json");
    std::cout << "wrote " << m.entries.size() << " samples and " << (out / "manifest.json").string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
};

using SampleList = std::vector<std::shared_ptr<const Sample>>;

SampleList only_domains(const SampleList& in, const std::set<DomainId>& keep) {
    SampleList out;
    for (const auto& s : in)
        if (keep.count(s->domain)) out.push_back(s);
    return out;
}

nlohmann::json split_report(const MetricsReport& r, const DomainRegistry& reg) { return to_json(r, domain_names(reg)); }

template <class Scalar>
int run_training(const RunConfig& rc, const nlohmann::json& resolved, const std::string& resume) {
    DomainRegistry registry;
    SampleList train_set, test_set;
    if (rc.data.manifests.empty()) throw ConfigError("data.manifests is empty");
    std::vector<Manifest> manifests;
    for (const auto& path : rc.data.manifests) {
        manifests.push_back(load_manifest(resolve_data_path(path)));
        for (const auto& d : manifests.back().domains) registry.merge(d);
    }
    registry.validate();
    for (const auto& m : manifests) {
        auto tr = load_split(m, Split::Train, registry), te = load_split(m, Split::Test, registry);
        train_set.insert(train_set.end(), tr.begin(), tr.end());
        test_set.insert(test_set.end(), te.begin(), te.end());
    }
    std::set<DomainId> active;
    if (rc.data.domains.empty()) {
        for (const auto& d : registry.specs()) active.insert(d.id);
    } else {
        for (const auto& name : rc.data.domains) active.insert(registry.by_name(name).id);
    }
    train_set = only_domains(train_set, active);
    test_set = only_domains(test_set, active);
    if (train_set.empty()) throw ConfigError("no training samples for the selected domains");

    const fs::path out = rc.out_dir;
    fs::create_directories(out);
    write_json(out / "resolved_config.json", resolved);

    std::unique_ptr<UniFieldModel<Scalar>> model;
    std::optional<Adam<Scalar>> adam;
    std::uint64_t start = 0;
    if (!resume.empty()) {
        auto ck = load_checkpoint<Scalar>(resume);
        if (!(ck.model->config() == rc.model)) throw ConfigError("checkpoint model config differs from the run config");
        model = std::move(ck.model);
        adam.emplace(model->parameters(), ck.adam.value_or(rc.train.adam));
        if (ck.adam) adam->restore(ck.adam_steps, ck.adam_m, ck.adam_v);
        start = ck.step;
    } else {
        fit_flow_standardization(registry, train_set);
        model = std::make_unique<UniFieldModel<Scalar>>(rc.model, registry);
        adam.emplace(model->parameters(), rc.train.adam);
    }
    const SampleList fit_set = rc.data.balance_domains ? balance_domains(train_set) : train_set;

    auto opts = rc.train;
    opts.out_dir = out;
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(*model, *adam, fit_set, test_set, opts, start, nlohmann::json{{"run_config", resolved}});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json report{{"step", result.step},
                          {"best_step", result.best_step},
                          {"train", split_report(evaluate(*model, train_set, rc.train.eval_chunk, rc.seed), model->registry())}};
    if (!test_set.empty()) report["test"] = split_report(*result.last_eval, model->registry());
    write_json(out / "report.json", report);
    std::cout << report.dump(2) << "\ntrained in " << seconds << " s\n";
    return kOk;
}

int cmd_train(const TrainArgs& a) {
    nlohmann::json j = a.config.empty() ? nlohmann::json::object() : load_json_file(a.config);
    for (const auto& o : a.overrides) apply_override(j, o);
    if (a.seed) j["seed"] = *a.seed;
    if (!a.out.empty()) j["out_dir"] = a.out;
    const RunConfig rc = run_config_from_json(j);
    const auto resolved = to_json(rc);
    if (rc.model.dtype == "float64") return run_training<double>(rc, resolved, a.checkpoint);
    return run_training<float>(rc, resolved, a.checkpoint);
}

// ---------------------------------------------------------------------------
// eval / predict

std::string checkpoint_dtype(const fs::path& p) { return read_checkpoint_header(p).at("dtype").get<std::string>(); }

struct EvalArgs {
    std::string checkpoint, manifest, split = "test", out;
    Index chunk = 0;
    std::uint64_t seed = 0;
};

template <class Scalar>
int run_eval(const EvalArgs& a) {
    const auto ck = load_checkpoint<Scalar>(a.checkpoint);
    const auto m = load_manifest(resolve_data_path(a.manifest));
    const auto& reg = ck.model->registry();
    SampleList samples;
    for (const auto& s : load_split(m, split_from_string(a.split), reg))
        if (reg.contains(s->domain)) samples.push_back(s);
    if (samples.empty()) throw ContractError("no samples of the checkpoint's domains in split '" + a.split + "'");
    const auto report = evaluate(*ck.model, samples, a.chunk, a.seed);
    nlohmann::json j{{"checkpoint", a.checkpoint}, {"split", a.split}, {"chunk", a.chunk}, {"step", ck.step},
                     {"metrics", split_report(report, reg)}};
    if (!a.out.empty()) write_json(a.out, j);
    std::cout << j.dump(2) << '\n';
    return kOk;
}

struct PredictArgs {
    std::string checkpoint, sample, out;
    Index chunk = 0;
    std::uint64_t seed = 0;
};

template <class Scalar>
int run_predict(const PredictArgs& a) {
    const auto ck = load_checkpoint<Scalar>(a.checkpoint);
    const auto& reg = ck.model->registry();
    const Sample s = load_sample(resolve_data_path(a.sample), &reg);
    const Eigen::VectorXd t = predict(*ck.model, s, a.chunk, a.seed);
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    out << "x y z p_pred p_true error\n";
    char line[256];
    for (Index i = 0; i < s.size(); ++i) {
        const double p = reg.target_to_pressure(s.domain, t[i]);
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g %.9g\n", s.points(i, 0), s.points(i, 1), s.points(i, 2), p,
                      s.target[i], p - s.target[i]);
        out << line;
    }
    std::cout << "wrote " << s.size() << " predictions to " << a.out << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const GradcheckSuiteOptions& o, const std::string& out) {
    const auto cases = run_gradcheck_suite(o);
    bool ok = true;
    auto arr = nlohmann::json::array();
    for (const auto& c : cases) {
        ok = ok && c.passed();
        std::printf("%-4s %-26s max_rel=%.3e tol=%.0e checked=%zu\n", c.passed() ? "PASS" : "FAIL", c.name.c_str(), c.max_rel_error,
                    c.tolerance, c.checked);
        arr.push_back({{"name", c.name}, {"max_rel_error", c.max_rel_error}, {"tolerance", c.tolerance}, {"checked", c.checked},
                       {"worst", c.worst}, {"passed", c.passed()}});
    }
    if (!out.empty()) write_json(out, {{"passed", ok}, {"cases", arr}});
    return ok ? kOk : kNumerical;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unifield: multi-domain surface-pressure model"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen-synthetic", "write a synthetic dataset and its manifest");
    g->add_option("--domain", gen.domains, "cylinder and/or sphere (repeatable)")->required();
    g->add_option("--count", gen.count, "training samples per domain");
    g->add_option("--test-count", gen.test_count, "test samples per domain");
    g->add_option("--n-points", gen.n_points, "points per sample")->check(CLI::Range(8, 1 << 24));
    g->add_option("--noise", gen.noise, "Gaussian noise std on Cp")->check(CLI::NonNegativeNumber);
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--format", gen.format, "text or binary");
    g->add_flag("--flow-sensitive", gen.flow_sensitive, "cylinder suction scales with U/30");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a model from a run config");
    t->add_option("--config", tr.config, "JSON run config")->check(CLI::ExistingFile);
    t->add_option("--set", tr.overrides, "key=value override (repeatable)");
    t->add_option("--seed", tr.seed);
    t->add_option("--out", tr.out, "output directory");
    t->add_option("--checkpoint", tr.checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
    e->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
    e->add_option("--manifest", ev.manifest)->required();
    e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}));
    e->add_option("--chunk", ev.chunk, "points per forward pass (0: whole sample)");
    e->add_option("--seed", ev.seed, "chunk shuffle seed");
    e->add_option("--out", ev.out, "report path");

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "write per-point predictions for one sample");
    p->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
    p->add_option("--sample", pr.sample)->required();
    p->add_option("--out", pr.out)->required();
    p->add_option("--chunk", pr.chunk);
    p->add_option("--seed", pr.seed);

    GradcheckSuiteOptions gc;
    std::string gc_out;
    auto* c = app.add_subcommand("gradcheck", "finite-difference checks of every op and the end-to-end model");
    c->add_option("--stages", gc.model_stages)->check(CLI::Range(1, 6));
    c->add_option("--channels", gc.model_channels)->check(CLI::Range(1, 64));
    c->add_option("--points", gc.model_points)->check(CLI::Range(8, 4096));
    c->add_option("--seed", gc.seed);
    c->add_option("--out", gc_out, "JSON report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*t) return cmd_train(tr);
        if (*e) return checkpoint_dtype(ev.checkpoint) == "float64" ? run_eval<double>(ev) : run_eval<float>(ev);
        if (*p) return checkpoint_dtype(pr.checkpoint) == "float64" ? run_predict<double>(pr) : run_predict<float>(pr);
        if (*c) return cmd_gradcheck(gc, gc_out);
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << '\n';
        return kUsage;
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kConfig;
    } catch (const NumericalError& err) {
        std::cerr << "numerical error: " << err.what() << '\n';
        return kNumerical;
    } catch (const ParseError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kData;
    } catch (const IoError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kData;
    } catch (const RegistryError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kData;
    } catch (const DomainSchemaError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kData;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kOther;
    }
    return kUsage;
}
