#include "unifield/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "unifield/errors.hpp"

namespace unifield {

namespace fs = std::filesystem;

namespace {

constexpr char kTextMagic[] = "# unifield sample v1";
constexpr char kBinaryMagic[8] = {'U', 'F', 'S', 'A', 'M', 'P', 'L', 'E'};
constexpr std::uint32_t kBinaryVersion = 1;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_sample(const Sample& s) {
    if (s.points.rows() < 1) throw ContractError("sample has no points");
    if (s.target.size() != s.points.rows())
        throw DimensionError("sample target length " + std::to_string(s.target.size()) + " differs from point count " +
                             std::to_string(s.points.rows()));
    if (!s.points.allFinite() || !s.target.allFinite()) throw ContractError("sample contains non-finite values");
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

double parse_double(const std::string& tok, std::size_t line) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw ParseError("line " + std::to_string(line) + ": cannot parse number '" + tok + "'", line);
    return v;
}

Sample load_text(std::istream& in) {
    Sample s;
    std::string line;
    std::size_t lineno = 0;
    auto next = [&](const char* what) {
        if (!std::getline(in, line)) throw ParseError("line " + std::to_string(lineno + 1) + ": missing " + what, lineno + 1);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    next("header");
    if (line != kTextMagic) throw ParseError("line 1: expected '" + std::string(kTextMagic) + "'", 1);

    next("domain line");
    auto tok = split_ws(line);
    if (tok.size() != 2 || tok[0] != "domain") throw ParseError("line 2: expected 'domain <id>'", 2);
    {
        const double d = parse_double(tok[1], 2);
        if (d != std::floor(d) || d < 1 || d > 1e6) throw ParseError("line 2: domain id must be a positive integer", 2);
        s.domain = static_cast<DomainId>(d);
    }

    next("flow line");
    tok = split_ws(line);
    if (tok.empty() || tok[0] != "flow") throw ParseError("line 3: expected 'flow <values...>'", 3);
    for (std::size_t i = 1; i < tok.size(); ++i) s.flow.push_back(parse_double(tok[i], 3));

    next("column header");
    if (split_ws(line) != std::vector<std::string>{"x", "y", "z", "p"}) throw ParseError("line 4: expected columns 'x y z p'", 4);

    std::vector<double> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 4)
            throw ParseError("line " + std::to_string(lineno) + ": expected 4 columns, found " + std::to_string(tok.size()), lineno);
        for (const auto& t : tok) rows.push_back(parse_double(t, lineno));
    }
    const Index n = static_cast<Index>(rows.size() / 4);
    if (n == 0) throw ParseError("line " + std::to_string(lineno + 1) + ": sample has no data rows", lineno + 1);
    s.points.resize(n, 3);
    s.target.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) s.points(i, c) = rows[static_cast<std::size_t>(4 * i + c)];
        s.target[i] = rows[static_cast<std::size_t>(4 * i + 3)];
    }
    return s;
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class ByteReader {
public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    template <class T>
    T get(const char* what) {
        if (pos_ + sizeof(T) > data_.size())
            throw ParseError("offset " + std::to_string(pos_) + ": truncated file while reading " + what, pos_);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

Sample load_binary(std::string bytes) {
    ByteReader r(std::move(bytes));
    for (char m : kBinaryMagic)
        if (r.get<char>("magic") != m) throw ParseError("offset 0: bad magic", 0);
    const std::size_t vpos = r.pos();
    if (r.get<std::uint32_t>("version") != kBinaryVersion) throw ParseError("offset " + std::to_string(vpos) + ": unsupported version", vpos);
    Sample s;
    const std::size_t dpos = r.pos();
    s.domain = r.get<std::int32_t>("domain id");
    if (s.domain < 1) throw ParseError("offset " + std::to_string(dpos) + ": domain id must be positive", dpos);
    const auto flow_dim = r.get<std::uint32_t>("flow_dim");
    const std::size_t npos = r.pos();
    const auto n = r.get<std::uint64_t>("point count");
    if (n == 0) throw ParseError("offset " + std::to_string(npos) + ": sample has no points", npos);
    const std::uint64_t need = (static_cast<std::uint64_t>(flow_dim) + 4 * n) * sizeof(double);
    if (n > (std::uint64_t{1} << 40) || r.remaining() != need)
        throw ParseError("offset " + std::to_string(r.pos()) + ": payload size " + std::to_string(r.remaining()) + " does not match header (" +
                             std::to_string(need) + " bytes expected)",
                         r.pos());
    for (std::uint32_t i = 0; i < flow_dim; ++i) s.flow.push_back(r.get<double>("flow"));
    s.points.resize(static_cast<Index>(n), 3);
    s.target.resize(static_cast<Index>(n));
    for (Index i = 0; i < static_cast<Index>(n); ++i) {
        for (int c = 0; c < 3; ++c) s.points(i, c) = r.get<double>("row");
        const std::size_t at = r.pos();
        s.target[i] = r.get<double>("row");
        if (!s.points.row(i).allFinite() || !std::isfinite(s.target[i]))
            throw ParseError("offset " + std::to_string(at) + ": non-finite value", at);
    }
    return s;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

} // namespace

void save_sample(const Sample& sample, const fs::path& path, SampleFormat format) {
    check_sample(sample);
    auto out = open_out(path);
    if (format == SampleFormat::Binary) {
        out.write(kBinaryMagic, sizeof kBinaryMagic);
        put(out, kBinaryVersion);
        put(out, static_cast<std::int32_t>(sample.domain));
        put(out, static_cast<std::uint32_t>(sample.flow.size()));
        put(out, static_cast<std::uint64_t>(sample.size()));
        for (double v : sample.flow) put(out, v);
        for (Index i = 0; i < sample.size(); ++i) {
            for (int c = 0; c < 3; ++c) put(out, sample.points(i, c));
            put(out, sample.target[i]);
        }
    } else {
        out << kTextMagic << '\n' << "domain " << sample.domain << '\n' << "flow";
        for (double v : sample.flow) out << ' ' << fmt(v);
        out << "\nx y z p\n";
        for (Index i = 0; i < sample.size(); ++i)
            out << fmt(sample.points(i, 0)) << ' ' << fmt(sample.points(i, 1)) << ' ' << fmt(sample.points(i, 2)) << ' '
                << fmt(sample.target[i]) << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Sample load_sample(const fs::path& path, const DomainRegistry* registry) {
    std::string bytes = read_file(path);
    Sample s;
    if (bytes.size() >= sizeof kBinaryMagic && std::memcmp(bytes.data(), kBinaryMagic, sizeof kBinaryMagic) == 0) {
        s = load_binary(std::move(bytes));
    } else {
        std::istringstream in(bytes);
        s = load_text(in);
    }
    if (registry) registry->check_flow(s.domain, s.flow);  // throws RegistryError for unknown ids
    return s;
}

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "' (expected train or test)");
}

// ---------------------------------------------------------------------------

void save_manifest(const Manifest& manifest, const fs::path& path) {
    nlohmann::json j;
    j["format"] = "unifield-manifest";
    j["version"] = 1;
    j["name"] = manifest.name;
    j["domains"] = manifest.domains;
    auto samples = nlohmann::json::array();
    for (const auto& e : manifest.entries)
        samples.push_back({{"path", e.path.generic_string()}, {"domain", e.domain}, {"flow", e.flow}, {"split", to_string(e.split)}});
    j["samples"] = std::move(samples);
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Manifest load_manifest(const fs::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("manifest '" + path.string() + "': " + e.what(), e.byte);
    }
    Manifest m;
    m.directory = path.has_parent_path() ? path.parent_path() : fs::path(".");
    try {
        if (j.value("format", "") != "unifield-manifest") throw ParseError("manifest '" + path.string() + "': missing format tag", 0);
        if (j.value("version", 0) != 1) throw ParseError("manifest '" + path.string() + "': unsupported version", 0);
        m.name = j.value("name", "");
        for (const auto& d : j.at("domains")) m.domains.push_back(d.get<DomainSpec>());
        for (const auto& e : j.at("samples")) {
            ManifestEntry entry;
            entry.path = e.at("path").get<std::string>();
            entry.domain = e.at("domain").get<DomainId>();
            entry.flow = e.at("flow").get<std::vector<double>>();
            entry.split = split_from_string(e.value("split", "train"));
            m.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest '" + path.string() + "': " + e.what(), 0);
    }
    DomainRegistry reg;
    for (const auto& d : m.domains) reg.merge(d);
    for (const auto& e : m.entries) {
        reg.check_flow(e.domain, e.flow);
        if (!fs::exists(m.resolve(e))) throw IoError("manifest '" + path.string() + "' references missing file '" + m.resolve(e).string() + "'");
    }
    return m;
}

std::vector<std::shared_ptr<const Sample>> load_split(const Manifest& manifest, Split split, const DomainRegistry& registry) {
    std::vector<std::shared_ptr<const Sample>> out;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        auto s = std::make_shared<Sample>(load_sample(manifest.resolve(e), &registry));
        if (s->domain != e.domain || s->flow != e.flow)
            throw ContractError("sample '" + manifest.resolve(e).string() + "' disagrees with its manifest entry");
        out.push_back(std::move(s));
    }
    return out;
}

std::optional<fs::path> data_root() {
    const char* env = std::getenv("UNIFIELD_DATA_ROOT");
    if (!env || !*env) return std::nullopt;
    return fs::path(env);
}

fs::path resolve_data_path(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (auto root = data_root()) return *root / p;
    return p;
}

void fit_flow_standardization(DomainRegistry& registry, const std::vector<std::shared_ptr<const Sample>>& samples) {
    for (const auto& spec : registry.specs()) {
        const auto d = static_cast<std::size_t>(spec.flow_dim);
        std::vector<double> sum(d, 0.0), sq(d, 0.0);
        std::size_t n = 0;
        for (const auto& s : samples) {
            if (s->domain != spec.id) continue;
            registry.check_flow(spec.id, s->flow);
            for (std::size_t i = 0; i < d; ++i) sum[i] += s->flow[i];
            ++n;
        }
        if (n == 0) continue;
        std::vector<double> mean(d), std(d, 1.0);
        for (std::size_t i = 0; i < d; ++i) mean[i] = sum[i] / static_cast<double>(n);
        for (const auto& s : samples)
            if (s->domain == spec.id)
                for (std::size_t i = 0; i < d; ++i) sq[i] += (s->flow[i] - mean[i]) * (s->flow[i] - mean[i]);
        for (std::size_t i = 0; i < d; ++i) {
            const double sd = std::sqrt(sq[i] / static_cast<double>(n));
            if (n > 1 && sd > 1e-12 * std::max(1.0, std::abs(mean[i]))) std[i] = sd;
        }
        auto& target = registry.mutable_at(spec.id);
        target.flow_mean = std::move(mean);
        target.flow_std = std::move(std);
    }
}

// ---------------------------------------------------------------------------

double cylinder_cp(double theta) {
    const double s = std::sin(theta);
    return 1.0 - 4.0 * s * s;
}

double sphere_cp(double theta) {
    const double s = std::sin(theta);
    return 1.0 - 2.25 * s * s;
}

namespace {

void check_count(const SyntheticOptions& o) {
    if (o.n_points < 8) throw ContractError("synthetic samples need at least 8 points, got " + std::to_string(o.n_points));
    if (!(o.noise_std >= 0.0)) throw ContractError("noise_std must be non-negative");
}

} // namespace

Sample gen_cylinder(const SyntheticOptions& o) {
    check_count(o);
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), height(-1.0, 1.0), speed(10.0, 50.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    Sample s;
    s.domain = 1;
    s.flow = {speed(rng)};  // always drawn so geometry does not depend on an explicit flow
    if (!o.flow.empty()) {
        if (o.flow.size() != 1) throw DomainSchemaError("cylinder flow is [U]");
        s.flow = o.flow;
    }
    const double warp = o.flow_sensitive ? s.flow[0] / 30.0 : 1.0;
    s.points.resize(o.n_points, 3);
    s.target.resize(o.n_points);
    for (Index i = 0; i < o.n_points; ++i) {
        const double th = angle(rng), z = height(rng);
        s.points.row(i) << std::cos(th), std::sin(th), z;
        const double sn = std::sin(th);
        s.target[i] = o.flow_sensitive ? 1.0 - 4.0 * warp * sn * sn : cylinder_cp(th);
    }
    if (o.noise_std > 0)
        for (Index i = 0; i < o.n_points; ++i) s.target[i] += o.noise_std * noise(rng);
    return s;
}

Sample gen_sphere(const SyntheticOptions& o) {
    check_count(o);
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> speed(10.0, 50.0), alpha(-std::numbers::pi / 2, std::numbers::pi / 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    Sample s;
    s.domain = 2;
    const double u = speed(rng);
    s.flow = {u, alpha(rng)};
    if (!o.flow.empty()) {
        if (o.flow.size() != 2) throw DomainSchemaError("sphere flow is [U, alpha]");
        s.flow = o.flow;
    }
    const Eigen::RowVector3d axis(std::cos(s.flow[1]), std::sin(s.flow[1]), 0.0);
    s.points.resize(o.n_points, 3);
    s.target.resize(o.n_points);
    for (Index i = 0; i < o.n_points; ++i) {
        Eigen::RowVector3d v;
        do {
            v << normal(rng), normal(rng), normal(rng);
        } while (v.norm() < 1e-12);
        v.normalize();
        s.points.row(i) = v;
        const double c = std::clamp(v.dot(axis), -1.0, 1.0);
        s.target[i] = 1.0 - 2.25 * (1.0 - c * c);
    }
    if (o.noise_std > 0)
        for (Index i = 0; i < o.n_points; ++i) s.target[i] += o.noise_std * normal(rng);
    return s;
}

Sample generate_synthetic(const std::string& domain, const SyntheticOptions& options) {
    if (domain == "cylinder") return gen_cylinder(options);
    if (domain == "sphere") return gen_sphere(options);
    throw ContractError("unknown synthetic domain '" + domain + "'");
}

// ---------------------------------------------------------------------------

std::vector<std::shared_ptr<const Sample>> balance_domains(const std::vector<std::shared_ptr<const Sample>>& samples) {
    std::map<DomainId, std::vector<std::shared_ptr<const Sample>>> by_domain;
    for (const auto& s : samples) by_domain[s->domain].push_back(s);
    std::size_t largest = 0;
    for (const auto& [id, list] : by_domain) largest = std::max(largest, list.size());
    std::vector<std::shared_ptr<const Sample>> out;
    for (const auto& [id, list] : by_domain) {
        const std::size_t repeat = largest / list.size();
        for (std::size_t r = 0; r < repeat; ++r) out.insert(out.end(), list.begin(), list.end());
    }
    return out;
}

std::vector<Index> choose_points(Index n, Index count, std::mt19937_64& rng) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (count >= n) return idx;
    // partial Fisher-Yates
    for (Index i = 0; i < count; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    return idx;
}

MixedBatcher::MixedBatcher(std::vector<std::shared_ptr<const Sample>> samples, std::size_t batch_size, Index points_per_sample,
                           std::uint64_t seed)
    : samples_(std::move(samples)), batch_size_(batch_size), points_per_sample_(points_per_sample), seed_(seed) {
    if (samples_.empty()) throw ContractError("batcher needs at least one training sample");
    if (batch_size_ == 0) throw ContractError("batch size must be positive");
    if (points_per_sample_ < 1) throw ContractError("points_per_sample must be positive");
    for (const auto& s : samples_)
        if (!s) throw ContractError("null sample passed to batcher");
}

std::vector<std::size_t> MixedBatcher::epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(samples_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::seed_seq seq{seed_ & 0xffffffffu, seed_ >> 32, epoch & 0xffffffffu, epoch >> 32, std::uint64_t{0x5eed}};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

Sample MixedBatcher::subsample(const Sample& s, std::uint64_t epoch, std::size_t id) const {
    if (s.size() <= points_per_sample_) return s;
    std::seed_seq seq{seed_ & 0xffffffffu, seed_ >> 32, epoch & 0xffffffffu, epoch >> 32, std::uint64_t{id}, std::uint64_t{0x9a7}};
    std::mt19937_64 rng(seq);
    const auto keep = choose_points(s.size(), points_per_sample_, rng);
    Sample out;
    out.domain = s.domain;
    out.flow = s.flow;
    out.points.resize(points_per_sample_, 3);
    out.target.resize(points_per_sample_);
    for (Index i = 0; i < points_per_sample_; ++i) {
        out.points.row(i) = s.points.row(keep[static_cast<std::size_t>(i)]);
        out.target[i] = s.target[keep[static_cast<std::size_t>(i)]];
    }
    return out;
}

Batch MixedBatcher::next() {
    const std::uint64_t per_epoch = batches_per_epoch();
    Batch b;
    b.index = counter_;
    b.epoch = counter_ / per_epoch;
    const std::size_t slot = static_cast<std::size_t>(counter_ % per_epoch);
    const auto order = epoch_order(b.epoch);
    const std::size_t begin = slot * batch_size_, end = std::min(order.size(), begin + batch_size_);
    for (std::size_t i = begin; i < end; ++i) {
        b.sample_ids.push_back(order[i]);
        b.samples.push_back(subsample(*samples_[order[i]], b.epoch, order[i]));
    }
    ++counter_;
    return b;
}

void MixedBatcher::seek(std::uint64_t batch_index) { counter_ = batch_index; }

} // namespace unifield
