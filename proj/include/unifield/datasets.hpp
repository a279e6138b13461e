#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "unifield/domain.hpp"
#include "unifield/geometry.hpp"

namespace unifield {

/// One geometry instance. `target` holds the raw pressure column as stored on disk.
struct Sample {
    PointSet<double> points;
    DomainId domain = 0;
    std::vector<double> flow;
    Eigen::VectorXd target;

    Index size() const { return points.rows(); }
    bool operator==(const Sample& other) const {
        return domain == other.domain && flow == other.flow && points == other.points && target == other.target;
    }
};

enum class SampleFormat { Text, Binary };

/// Text: "# unifield sample v1", "domain <id>", "flow <v...>", "x y z p", then rows.
/// Binary: magic "UFSAMPLE", u32 version, i32 domain, u32 flow_dim, u64 N, f64 flow[], f64 rows[N][4].
void save_sample(const Sample& sample, const std::filesystem::path& path, SampleFormat format = SampleFormat::Text);
/// Throws ParseError (line or byte offset) on malformed input and RegistryError / DomainSchemaError
/// when a registry is given and the header does not match it.
Sample load_sample(const std::filesystem::path& path, const DomainRegistry* registry = nullptr);

enum class Split { Train, Test };
std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct ManifestEntry {
    std::filesystem::path path;  // as written in the manifest (relative to the manifest directory)
    DomainId domain = 0;
    std::vector<double> flow;
    Split split = Split::Train;
};

/// Dataset index: domains it declares plus one entry per sample file.
struct Manifest {
    std::string name;
    std::vector<DomainSpec> domains;
    std::vector<ManifestEntry> entries;
    std::filesystem::path directory;  // where relative entry paths resolve

    std::filesystem::path resolve(const ManifestEntry& e) const { return e.path.is_absolute() ? e.path : directory / e.path; }
};

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Validates that every referenced file exists and every domain id is declared.
Manifest load_manifest(const std::filesystem::path& path);

/// Loads every sample of one split, checking each header against its manifest entry.
std::vector<std::shared_ptr<const Sample>> load_split(const Manifest& manifest, Split split, const DomainRegistry& registry);

/// Directory used to resolve relative manifest paths when the environment variable
/// UNIFIELD_DATA_ROOT is set.
std::optional<std::filesystem::path> data_root();
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

/// Sets each domain's flow mean/std from the given (training) samples. Components with
/// zero spread, or domains with a single sample, get std 1. Domains without samples are left unchanged.
void fit_flow_standardization(DomainRegistry& registry, const std::vector<std::shared_ptr<const Sample>>& samples);

// ---------------------------------------------------------------------------
// Analytic potential-flow domains.

struct SyntheticOptions {
    Index n_points = 1024;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    /// Cylinder only: scale the suction term by U / 30 so the target depends on the flow.
    bool flow_sensitive = false;
    /// Fixed flow values; drawn from the seed when empty.
    std::vector<double> flow;
};

/// Cp on a circular cylinder in potential flow, theta measured from the stagnation line.
double cylinder_cp(double theta);
/// Cp on a sphere in potential flow, theta measured from the stagnation axis.
double sphere_cp(double theta);

/// Unit-radius cylinder of span 2 along z; flow arrives along -x so theta = 0 is (1, 0, 0).
Sample gen_cylinder(const SyntheticOptions& options);
/// Unit sphere; flow [U, alpha] with the stagnation axis (cos alpha, sin alpha, 0).
Sample gen_sphere(const SyntheticOptions& options);
Sample generate_synthetic(const std::string& domain, const SyntheticOptions& options);

// ---------------------------------------------------------------------------
// Batching

struct Batch {
    std::vector<Sample> samples;           // subsampled copies
    std::vector<std::size_t> sample_ids;   // indices into the batcher's sample list
    std::uint64_t epoch = 0;
    std::uint64_t index = 0;               // global batch counter
};

/// Mixed-domain mini-batches: each epoch is a seeded shuffle over all samples, and each
/// sample is subsampled to `points_per_sample` points without replacement.
class MixedBatcher {
public:
    static constexpr Index kDefaultPointsPerSample = 32768;

    MixedBatcher(std::vector<std::shared_ptr<const Sample>> samples, std::size_t batch_size,
                 Index points_per_sample = kDefaultPointsPerSample, std::uint64_t seed = 0);

    Batch next();
    /// Restart from a given global batch counter (used when resuming).
    void seek(std::uint64_t batch_index);

    std::size_t batches_per_epoch() const { return (samples_.size() + batch_size_ - 1) / batch_size_; }
    std::size_t sample_count() const { return samples_.size(); }

private:
    std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
    Sample subsample(const Sample& s, std::uint64_t epoch, std::size_t id) const;

    std::vector<std::shared_ptr<const Sample>> samples_;
    std::size_t batch_size_;
    Index points_per_sample_;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// Repeats each domain's samples by floor(largest domain count / own count) so every
/// domain contributes a similar share of each epoch. Order: domains by id, samples in input order.
std::vector<std::shared_ptr<const Sample>> balance_domains(const std::vector<std::shared_ptr<const Sample>>& samples);

/// Random subset of `count` distinct indices in [0, n), in ascending order; all indices when count >= n.
std::vector<Index> choose_points(Index n, Index count, std::mt19937_64& rng);

} // namespace unifield
