#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "unifield/checkpoint.hpp"
#include "unifield/datasets.hpp"
#include "unifield/metrics.hpp"
#include "unifield/model.hpp"
#include "unifield/optim.hpp"

namespace unifield {

struct TrainOptions {
    std::uint64_t steps = 1000;  // total optimizer steps, counted from zero across resumes
    std::uint64_t stop_at = 0;   // stop early after this many total steps (0: run to `steps`); the schedule still spans `steps`
    std::size_t batch_size = 4;
    Index points_per_sample = MixedBatcher::kDefaultPointsPerSample;
    AdamOptions adam;
    double final_lr_fraction = 0.1;
    double clip_norm = 1.0;
    std::uint64_t eval_every = 0;  // 0: evaluate only after the last step
    Index eval_chunk = 0;          // 0: evaluate each sample in one forward pass
    std::uint64_t seed = 0;        // batch order and subsampling
    std::uint64_t log_every = 1;
    std::filesystem::path out_dir;  // log + checkpoints; nothing is written when empty
};

struct TrainResult {
    std::uint64_t step = 0;
    std::vector<double> losses;  // one per step taken in this call
    std::optional<MetricsReport> last_eval;
    std::optional<MetricsReport> best_eval;
    std::uint64_t best_step = 0;
};

/// Target values of a sample in the domain's training space.
inline Eigen::VectorXd sample_targets(const DomainRegistry& registry, const Sample& s) {
    Eigen::VectorXd t(s.size());
    for (Index i = 0; i < s.size(); ++i) t[i] = registry.pressure_to_target(s.domain, s.target[i]);
    return t;
}

/// Predictions in target space for one sample; chunk = 0 or chunk >= N runs a single forward.
template <class Scalar>
Eigen::VectorXd predict(const UniFieldModel<Scalar>& model, const Sample& s, Index chunk = 0, std::uint64_t seed = 0) {
    NoGradGuard guard;
    const PointSet<Scalar> p = s.points.template cast<Scalar>();
    const auto y = (chunk > 0 && chunk < s.size()) ? model.predict_chunked(p, s.domain, s.flow, chunk, seed)
                                                     : model.forward(p, s.domain, s.flow);
    return y.value().template cast<double>();
}

template <class Scalar>
MetricsReport evaluate(const UniFieldModel<Scalar>& model, const std::vector<std::shared_ptr<const Sample>>& samples, Index chunk = 0,
                       std::uint64_t seed = 0) {
    MetricsAccumulator acc;
    for (const auto& s : samples) acc.add(s->domain, predict(model, *s, chunk, seed), sample_targets(model.registry(), *s));
    return acc.report();
}

inline std::map<DomainId, std::string> domain_names(const DomainRegistry& registry) {
    std::map<DomainId, std::string> out;
    for (const auto& s : registry.specs()) out[s.id] = s.name;
    return out;
}

/// FNV-1a over the raw bytes of every parameter accepted by `filter`.
template <class Scalar>
std::uint64_t parameter_hash(const ParameterList<Scalar>& params, const std::function<bool(const std::string&)>& filter = {}) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : params) {
        if (filter && !filter(name)) continue;
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.value().data());
        for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()) * sizeof(Scalar); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

/// Mean of per-sample L1 losses over a batch, plus the per-domain means.
template <class Scalar>
std::pair<Tensor<Scalar>, std::map<DomainId, double>> batch_loss(const UniFieldModel<Scalar>& model, const std::vector<Sample>& batch) {
    Tensor<Scalar> total;
    std::map<DomainId, std::pair<double, int>> per;
    for (const auto& s : batch) {
        const auto pred = model.forward(s.points.template cast<Scalar>(), s.domain, s.flow);
        const auto t = sample_targets(model.registry(), s);
        const auto target = Tensor<Scalar>({s.size()}, t.template cast<Scalar>(), false);
        const auto l = l1_loss(pred, target);
        auto& slot = per[s.domain];
        slot.first += static_cast<double>(l.item());
        ++slot.second;
        total = total.defined() ? add(total, l) : l;
    }
    std::map<DomainId, double> means;
    for (const auto& [d, v] : per) means[d] = v.first / v.second;
    return {scale(total, Scalar(1) / static_cast<Scalar>(batch.size())), means};
}

/// Runs optimizer steps start_step..end-1 over mixed-domain batches. Writes
/// train_log.jsonl, checkpoint_last.bin and checkpoint_best.bin into out_dir when set.
/// Throws NumericalError on a non-finite loss after dumping the offending batch.
template <class Scalar>
TrainResult train(UniFieldModel<Scalar>& model, Adam<Scalar>& adam, const std::vector<std::shared_ptr<const Sample>>& train_set,
                  const std::vector<std::shared_ptr<const Sample>>& eval_set, const TrainOptions& options, std::uint64_t start_step = 0,
                  const nlohmann::json& checkpoint_extra = nlohmann::json::object()) {
    MixedBatcher batcher(train_set, options.batch_size, options.points_per_sample, options.seed);
    batcher.seek(start_step);
    const auto names = domain_names(model.registry());

    std::ofstream log;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        log.open(options.out_dir / "train_log.jsonl", start_step == 0 ? std::ios::trunc : std::ios::app);
        if (!log) throw IoError("cannot write training log in '" + options.out_dir.string() + "'");
    }
    auto emit = [&](const nlohmann::json& rec) {
        if (log.is_open()) log << rec.dump() << '\n' << std::flush;
    };

    TrainResult result;
    result.step = start_step;
    double best_score = std::numeric_limits<double>::infinity();
    auto run_eval = [&](std::uint64_t step, double fallback_loss) {
        const bool have_eval = !eval_set.empty();
        std::optional<MetricsReport> report;
        if (have_eval) report = evaluate(model, eval_set, options.eval_chunk, options.seed);
        const double score = have_eval ? report->overall.mean.mae : fallback_loss;
        if (report) {
            result.last_eval = report;
            emit({{"step", step}, {"eval", to_json(*report, names)}});
        }
        if (score < best_score) {
            best_score = score;
            result.best_step = step;
            result.best_eval = report;
            if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "checkpoint_best.bin", model, step, &adam, checkpoint_extra);
        }
    };

    const std::uint64_t end = options.stop_at > 0 ? std::min(options.stop_at, options.steps) : options.steps;
    for (std::uint64_t step = start_step; step < end; ++step) {
        const auto batch = batcher.next();
        const double lr = cosine_lr(options.adam.lr, step, options.steps, options.final_lr_fraction);
        adam.zero_grad();
        auto [loss, per_domain] = batch_loss(model, batch.samples);
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) {
            nlohmann::json dump{{"step", step}, {"batch", batch.index}, {"epoch", batch.epoch}, {"sample_ids", batch.sample_ids}};
            if (!options.out_dir.empty()) std::ofstream(options.out_dir / "nonfinite_batch.json") << dump.dump(2) << '\n';
            throw NumericalError("non-finite loss at step " + std::to_string(step) + " (batch " + std::to_string(batch.index) +
                                 ", samples " + nlohmann::json(batch.sample_ids).dump() + ")");
        }
        loss.backward();
        const double grad_norm = adam.clip_grad_norm(options.clip_norm);
        adam.step(lr);
        result.losses.push_back(value);
        result.step = step + 1;

        if (options.log_every > 0 && (result.step % options.log_every == 0 || result.step == end)) {
            nlohmann::json dl = nlohmann::json::object();
            for (const auto& [d, v] : per_domain) dl[names.count(d) ? names.at(d) : std::to_string(d)] = v;
            emit({{"step", result.step}, {"loss", value}, {"domain_loss", dl}, {"lr", lr}, {"grad_norm", grad_norm}, {"batch", batch.index}});
        }
        if (options.eval_every > 0 && result.step % options.eval_every == 0 && result.step != end) run_eval(result.step, value);
    }
    if (result.step > start_step || start_step == end) {
        run_eval(result.step, result.losses.empty() ? std::numeric_limits<double>::infinity() : result.losses.back());
        if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "checkpoint_last.bin", model, result.step, &adam, checkpoint_extra);
    }
    return result;
}

} // namespace unifield
