#include "hyrep/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace hyrep {

using nlohmann::json;

void SpikeTrain::validate() const
{
    for (std::size_t u = 0; u < units.size(); ++u)
        if (!std::is_sorted(units[u].begin(), units[u].end()))
            throw std::invalid_argument("unit " + std::to_string(u) + ": timestamps not ascending");
    if (ao_start && go && *ao_start < *go)
        throw std::invalid_argument("AO_start precedes Go");
    if (ao_start && trial_end && *ao_start > *trial_end)
        throw std::invalid_argument("AO_start follows TrialEnd");
}

SpikeTrain segment_trial(const SpikeTrain& spikes)
{
    if (!spikes.ao_start)
        throw std::invalid_argument("segment_trial: missing AO_start marker");
    const double start = *spikes.ao_start - kSegmentBefore;
    const double end = *spikes.ao_start + kSegmentAfter;
    SpikeTrain out;
    out.length = kSegmentBefore + kSegmentAfter;
    out.units.resize(spikes.units.size());
    for (std::size_t u = 0; u < spikes.units.size(); ++u)
        for (double t : spikes.units[u])
            if (t >= start && t < end)
                out.units[u].push_back(t - start);
    const auto shift = [&](const std::optional<double>& m) -> std::optional<double> {
        if (!m)
            return std::nullopt;
        return *m - start;
    };
    out.prompt = shift(spikes.prompt);
    out.go = shift(spikes.go);
    out.ao_start = shift(spikes.ao_start);
    out.ao_end = shift(spikes.ao_end);
    out.trial_end = shift(spikes.trial_end);
    return out;
}

int bin_count(double length, double window, double stride)
{
    if (!(window > 0.0) || !(stride > 0.0))
        throw std::invalid_argument("bin window and stride must be positive");
    if (length < window)
        throw std::invalid_argument("segment shorter than one bin window");
    return static_cast<int>(std::floor((length - window) / stride + 1e-9)) + 1;
}

Eigen::MatrixXi bin_spikes(const SpikeTrain& spikes, double window, double stride)
{
    const int T = bin_count(spikes.length, window, stride);
    const auto N = static_cast<Eigen::Index>(spikes.units.size());
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(N, T);
    for (Eigen::Index u = 0; u < N; ++u) {
        for (double s : spikes.units[static_cast<std::size_t>(u)]) {
            // Candidate bins around s / stride, checked against the exact window bounds.
            const int hi = std::min(T - 1, static_cast<int>(std::floor(s / stride)) + 1);
            const int lo = std::max(0, static_cast<int>(std::floor((s - window) / stride)) - 1);
            for (int t = lo; t <= hi; ++t) {
                const double b0 = t * stride;
                if (s >= b0 && s < b0 + window)
                    ++counts(u, t);
            }
        }
    }
    return counts;
}

Vec Trial::flattened() const
{
    Vec v(counts.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < counts.rows(); ++r)
        for (Eigen::Index c = 0; c < counts.cols(); ++c)
            v[k++] = counts(r, c);
    return v;
}

int Taxonomy::index_of(const std::string& cls) const
{
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end())
        throw std::invalid_argument("unknown class '" + cls + "' in taxonomy " + name);
    return static_cast<int>(it - classes.begin());
}

std::vector<std::string> Taxonomy::group_names() const
{
    std::vector<std::string> out;
    for (const auto& p : paths)
        if (std::find(out.begin(), out.end(), p.front()) == out.end())
            out.push_back(p.front());
    return out;
}

std::vector<int> Taxonomy::group_ids() const
{
    const auto names = group_names();
    std::vector<int> out;
    for (const auto& p : paths)
        out.push_back(static_cast<int>(std::find(names.begin(), names.end(), p.front()) - names.begin()));
    return out;
}

void Taxonomy::validate() const
{
    if (classes.empty())
        throw std::invalid_argument("taxonomy has no classes");
    if (paths.size() != classes.size())
        throw std::invalid_argument("taxonomy paths do not match classes");
    if (!manners.empty() && manners.size() != classes.size())
        throw std::invalid_argument("taxonomy manners do not match classes");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!seen.insert(classes[i]).second)
            throw std::invalid_argument("duplicate class '" + classes[i] + "'");
        if (paths[i].empty() || paths[i].size() != paths.front().size())
            throw std::invalid_argument("class '" + classes[i] + "' has a path of the wrong depth");
    }
}

namespace {

struct ConsonantSpec {
    const char* name;
    const char* group;
    const char* manner;
};

constexpr ConsonantSpec kConsonants[] = {
    {"b", "LL", "PL"},   {"p", "LL", "PL"},   {"m", "LL", "NA"},   {"f", "LT", "FR"},   {"z", "TTT", "AFF"},
    {"c", "TTT", "AFF"}, {"s", "TTT", "FR"},  {"d", "TTG", "PL"},  {"t", "TTG", "PL"},  {"n", "TTG", "NA"},
    {"l", "TTG", "LA"},  {"zh", "TTH", "AFF"}, {"ch", "TTH", "AFF"}, {"sh", "TTH", "FR"}, {"r", "TTH", "FR"},
    {"j", "TBH", "AFF"}, {"q", "TBH", "AFF"}, {"x", "TBH", "FR"},  {"g", "TDS", "PL"},  {"k", "TDS", "PL"},
    {"h", "TDS", "FR"},
};

}  // namespace

std::vector<std::string> builtin_taxonomy_kinds()
{
    return {"consonant21", "vowel_mouth4"};
}

Taxonomy builtin_taxonomy(const std::string& kind, int classes_per_group)
{
    Taxonomy t;
    t.name = kind;
    if (kind == "consonant21") {
        for (const auto& c : kConsonants) {
            t.classes.emplace_back(c.name);
            t.paths.push_back({c.group, std::string(c.group) + "." + c.manner});
            t.manners.emplace_back(c.manner);
        }
    } else if (kind == "vowel_mouth4") {
        if (classes_per_group < 1)
            throw std::invalid_argument("classes_per_group must be >= 1");
        for (const char* g : {"OM", "ET", "RM", "CM"}) {
            for (int i = 1; i <= classes_per_group; ++i) {
                t.classes.push_back(std::string(g) + std::to_string(i));
                t.paths.push_back({g});
            }
        }
    } else {
        throw std::invalid_argument("unknown taxonomy '" + kind + "' (consonant21|vowel_mouth4)");
    }
    return t;
}

Taxonomy binary_taxonomy(int levels)
{
    if (levels < 2 || levels > 10)
        throw std::invalid_argument("binary_taxonomy: levels must be in [2, 10]");
    Taxonomy t;
    t.name = "binary" + std::to_string(levels);
    const int n = 1 << levels;
    for (int i = 0; i < n; ++i) {
        t.classes.push_back("c" + std::to_string(i));
        std::vector<std::string> path;
        for (int l = 1; l < levels; ++l) {
            std::string tag = "n";
            for (int b = 0; b < l; ++b)
                tag += ((i >> (levels - 1 - b)) & 1) ? '1' : '0';
            path.push_back(tag);
        }
        t.paths.push_back(std::move(path));
    }
    return t;
}

std::vector<int> Dataset::class_counts() const
{
    std::vector<int> out(classes.size(), 0);
    for (int y : labels)
        ++out.at(static_cast<std::size_t>(y));
    return out;
}

std::vector<int> Dataset::within_class_index() const
{
    std::vector<int> seen(classes.size(), 0);
    std::vector<int> out;
    out.reserve(labels.size());
    for (int y : labels)
        out.push_back(seen.at(static_cast<std::size_t>(y))++);
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const
{
    Dataset out;
    out.n_units = n_units;
    out.n_bins = n_bins;
    out.classes = classes;
    out.paths = paths;
    out.integral = integral;
    for (std::size_t i : indices) {
        out.features.push_back(features.at(i));
        out.labels.push_back(labels.at(i));
    }
    return out;
}

std::vector<int> Dataset::class_groups() const
{
    if (paths.empty())
        return {};
    Taxonomy t;
    t.classes = classes;
    t.paths = paths;
    return t.group_ids();
}

void Dataset::validate() const
{
    if (n_units < 1 || n_bins < 1)
        throw std::invalid_argument("dataset needs n_units >= 1 and n_bins >= 1");
    if (classes.empty())
        throw std::invalid_argument("dataset has no classes");
    if (!paths.empty() && paths.size() != classes.size())
        throw std::invalid_argument("dataset paths do not match classes");
    if (features.size() != labels.size())
        throw std::invalid_argument("dataset features and labels differ in length");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != input_dim())
            throw std::invalid_argument("trial " + std::to_string(i) + " has the wrong feature length");
        if (labels[i] < 0 || labels[i] >= num_classes())
            throw std::invalid_argument("trial " + std::to_string(i) + " has an out-of-range label");
    }
}

void SyntheticSpec::validate() const
{
    taxonomy.validate();
    if (trials_per_class < 1)
        throw std::invalid_argument("trials_per_class must be >= 1");
    if (feature_dim < 1)
        throw std::invalid_argument("feature_dim must be >= 1");
    const std::size_t levels = taxonomy.paths.front().size() + 1;
    if (level_scales.size() < levels)
        throw std::invalid_argument("level_scales needs " + std::to_string(levels) + " entries for taxonomy " +
                                    taxonomy.name);
    for (std::size_t l = 0; l < levels; ++l) {
        if (!(level_scales[l] > 0.0))
            throw std::invalid_argument("level_scales must be positive");
        if (l > 0 && level_scales[l] > level_scales[l - 1])
            throw std::invalid_argument("level_scales must be non-increasing with depth");
    }
    if (!(noise_sigma >= 0.0))
        throw std::invalid_argument("noise_sigma must be nonnegative");
}

namespace {

Vec gaussian(std::mt19937_64& rng, int n, double scale)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    for (auto& x : v)
        x = scale * g(rng);
    return v;
}

}  // namespace

std::vector<Vec> synthetic_class_means(const SyntheticSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::map<std::string, Vec> nodes;
    std::vector<Vec> means;
    const std::size_t depth = spec.taxonomy.paths.front().size();
    for (std::size_t cls = 0; cls < spec.taxonomy.size(); ++cls) {
        Vec parent = Vec::Zero(spec.feature_dim);
        std::string key;
        for (std::size_t l = 0; l < depth; ++l) {
            key += "/" + spec.taxonomy.paths[cls][l];
            auto it = nodes.find(key);
            if (it == nodes.end())
                it = nodes.emplace(key, parent + gaussian(rng, spec.feature_dim, spec.level_scales[l])).first;
            parent = it->second;
        }
        means.push_back(parent + gaussian(rng, spec.feature_dim, spec.level_scales[depth]));
    }
    return means;
}

Dataset generate_synthetic(const SyntheticSpec& spec)
{
    const std::vector<Vec> means = synthetic_class_means(spec);
    // Trial noise uses its own stream so class means do not depend on trial counts.
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    Dataset d;
    d.n_units = 1;
    d.n_bins = spec.feature_dim;
    d.classes = spec.taxonomy.classes;
    d.paths = spec.taxonomy.paths;
    for (std::size_t cls = 0; cls < means.size(); ++cls) {
        for (int t = 0; t < spec.trials_per_class; ++t) {
            d.features.push_back(means[cls] + gaussian(rng, spec.feature_dim, spec.noise_sigma));
            d.labels.push_back(static_cast<int>(cls));
        }
    }
    return d;
}

std::string dataset_to_json_text(const Dataset& d)
{
    d.validate();
    json meta{{"n_units", d.n_units}, {"n_bins", d.n_bins}, {"classes", d.classes}};
    if (!d.paths.empty())
        meta["paths"] = d.paths;
    json trials = json::array();
    for (std::size_t i = 0; i < d.size(); ++i) {
        json t{{"label", d.labels[i]}};
        if (d.integral) {
            std::vector<long long> counts;
            for (double x : d.features[i])
                counts.push_back(static_cast<long long>(x));
            t["counts"] = counts;
        } else {
            t["features"] = std::vector<double>(d.features[i].begin(), d.features[i].end());
        }
        trials.push_back(std::move(t));
    }
    return json{{"meta", std::move(meta)}, {"trials", std::move(trials)}}.dump() + "\n";
}

namespace {

const json& field(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object())
        throw ParseError(where + ": expected an object");
    const auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(where + "." + key + ": missing");
    return *it;
}

int int_field(const json& obj, const char* key, const std::string& where)
{
    const json& v = field(obj, key, where);
    if (!v.is_number_integer())
        throw ParseError(where + "." + key + ": expected an integer");
    return v.get<int>();
}

}  // namespace

Dataset dataset_from_json_text(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("dataset JSON: ") + e.what());
    }
    Dataset d;
    const json& meta = field(doc, "meta", "$");
    d.n_units = int_field(meta, "n_units", "meta");
    d.n_bins = int_field(meta, "n_bins", "meta");
    const json& classes = field(meta, "classes", "meta");
    if (!classes.is_array() || classes.empty())
        throw ParseError("meta.classes: expected a nonempty array");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!classes[i].is_string())
            throw ParseError("meta.classes[" + std::to_string(i) + "]: expected a string");
        d.classes.push_back(classes[i].get<std::string>());
    }
    if (meta.contains("paths")) {
        try {
            d.paths = meta["paths"].get<std::vector<std::vector<std::string>>>();
        } catch (const json::exception&) {
            throw ParseError("meta.paths: expected an array of string arrays");
        }
    }
    const json& trials = field(doc, "trials", "$");
    if (!trials.is_array())
        throw ParseError("trials: expected an array");
    const Eigen::Index dim = static_cast<Eigen::Index>(d.n_units) * d.n_bins;
    bool any_counts = false;
    bool any_features = false;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const std::string where = "trials[" + std::to_string(i) + "]";
        const json& t = trials[i];
        const json& label = field(t, "label", where);
        int y = -1;
        if (label.is_number_integer()) {
            y = label.get<int>();
        } else if (label.is_string()) {
            const auto it = std::find(d.classes.begin(), d.classes.end(), label.get<std::string>());
            if (it != d.classes.end())
                y = static_cast<int>(it - d.classes.begin());
        }
        if (y < 0 || y >= d.num_classes())
            throw ParseError(where + ".label: not a known class");
        const bool counts = t.contains("counts");
        const json& values = field(t, counts ? "counts" : "features", where);
        const std::string vwhere = where + (counts ? ".counts" : ".features");
        if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != dim)
            throw ParseError(vwhere + ": expected " + std::to_string(dim) + " values");
        Vec x(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            const json& v = values[static_cast<std::size_t>(k)];
            const std::string at = vwhere + "[" + std::to_string(k) + "]";
            if (counts) {
                if (!v.is_number_integer())
                    throw ParseError(at + ": expected an integer count");
                if (v.get<long long>() < 0)
                    throw ParseError(at + ": negative count");
            } else if (!v.is_number()) {
                throw ParseError(at + ": expected a number");
            }
            x[k] = v.get<double>();
        }
        any_counts = any_counts || counts;
        any_features = any_features || !counts;
        d.features.push_back(std::move(x));
        d.labels.push_back(y);
    }
    d.integral = any_counts && !any_features;
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("dataset: ") + e.what());
    }
    return d;
}

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << dataset_to_json_text(d);
}

Dataset load_dataset(const std::filesystem::path& path)
{
    try {
        return dataset_from_json_text(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

double parse_double(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(where + ": '" + s + "' is not a number");
    return v;
}

long long parse_int(const std::string& s, const std::string& where)
{
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(where + ": '" + s + "' is not an integer");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::pair<int, std::vector<std::string>>> rows;  // (line number, fields)
};

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& required)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto fields = split_csv(line);
        if (t.header.empty()) {
            t.header = fields;
            for (std::size_t i = 0; i < required.size(); ++i)
                if (i >= t.header.size() || t.header[i] != required[i])
                    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected column " +
                                     std::to_string(i + 1) + " to be '" + required[i] + "'");
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
        t.rows.emplace_back(lineno, std::move(fields));
    }
    if (t.header.empty())
        throw ParseError(path.string() + ": empty file");
    return t;
}

}  // namespace

Dataset ingest_csv(const std::filesystem::path& spikes_csv, const std::filesystem::path& markers_csv)
{
    const CsvTable spikes = read_csv(spikes_csv, {"unit", "timestamp"});
    const CsvTable markers = read_csv(markers_csv, {"trial", "prompt", "go", "ao_start", "ao_end", "end"});
    const bool has_label = markers.header.size() > 6 && markers.header[6] == "label";

    std::map<long long, std::vector<double>> by_unit;
    for (const auto& [lineno, f] : spikes.rows) {
        const std::string where = spikes_csv.string() + ":" + std::to_string(lineno);
        by_unit[parse_int(f[0], where + ": unit")].push_back(parse_double(f[1], where + ": timestamp"));
    }
    SpikeTrain all;
    for (auto& [unit, ts] : by_unit) {
        std::sort(ts.begin(), ts.end());
        all.units.push_back(ts);
    }

    Dataset d;
    d.n_units = static_cast<int>(all.units.size());
    d.n_bins = bin_count(kSegmentBefore + kSegmentAfter);
    d.integral = true;
    std::map<std::string, int> class_ids;
    for (const auto& [lineno, f] : markers.rows) {
        const std::string where = markers_csv.string() + ":" + std::to_string(lineno);
        SpikeTrain trial = all;
        trial.prompt = parse_double(f[1], where + ": prompt");
        trial.go = parse_double(f[2], where + ": go");
        trial.ao_start = parse_double(f[3], where + ": ao_start");
        trial.ao_end = parse_double(f[4], where + ": ao_end");
        trial.trial_end = parse_double(f[5], where + ": end");
        try {
            trial.validate();
        } catch (const std::invalid_argument& e) {
            throw ParseError(where + ": " + e.what());
        }
        const std::string label = has_label ? f[6] : std::string("unlabeled");
        const auto [it, fresh] = class_ids.try_emplace(label, static_cast<int>(d.classes.size()));
        if (fresh)
            d.classes.push_back(label);
        const Trial binned{bin_spikes(segment_trial(trial)), it->second};
        d.features.push_back(binned.flattened());
        d.labels.push_back(binned.label);
    }
    if (d.features.empty())
        throw ParseError(markers_csv.string() + ": no trials");
    if (d.n_units == 0)
        throw ParseError(spikes_csv.string() + ": no spikes");
    return d;
}

}  // namespace hyrep
