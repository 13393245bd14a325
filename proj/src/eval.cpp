#include "hyrep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace hyrep {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(int classes) : counts_(Eigen::MatrixXi::Zero(classes, classes))
{
    if (classes < 0)
        throw std::invalid_argument("negative class count");
}

void ConfusionMatrix::add(int truth, int predicted)
{
    if (truth < 0 || predicted < 0 || truth >= classes() || predicted >= classes())
        throw std::out_of_range("confusion matrix class out of range");
    ++counts_(truth, predicted);
}

long ConfusionMatrix::total() const
{
    return counts_.cast<long>().sum();
}

long ConfusionMatrix::trace() const
{
    return counts_.cast<long>().trace();
}

double ConfusionMatrix::accuracy() const
{
    const long t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

std::vector<double> ConfusionMatrix::per_class_accuracy() const
{
    std::vector<double> out;
    for (int k = 0; k < classes(); ++k) {
        const long row = counts_.row(k).cast<long>().sum();
        out.push_back(row == 0 ? 0.0 : static_cast<double>(counts_(k, k)) / static_cast<double>(row));
    }
    return out;
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& names) const
{
    const auto name = [&](int k) {
        return k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)] : std::to_string(k);
    };
    std::ostringstream out;
    out << "true\\predicted";
    for (int k = 0; k < classes(); ++k)
        out << "," << name(k);
    out << "\n";
    for (int r = 0; r < classes(); ++r) {
        out << name(r);
        for (int k = 0; k < classes(); ++k)
            out << "," << counts_(r, k);
        out << "\n";
    }
    return out.str();
}

Predictor model_predictor(const Model& model)
{
    return [model](const Vec& x) { return model.predict(x).probabilities; };
}

json Metrics::to_json(const std::vector<std::string>& names) const
{
    json per_class = json::object();
    for (std::size_t k = 0; k < per_class_accuracy.size(); ++k)
        per_class[k < names.size() ? names[k] : std::to_string(k)] = per_class_accuracy[k];
    json top = json::object();
    for (const auto& [n, acc] : top_n)
        top[std::to_string(n)] = acc;
    json rows = json::array();
    for (int r = 0; r < confusion.classes(); ++r) {
        std::vector<int> row;
        for (int k = 0; k < confusion.classes(); ++k)
            row.push_back(confusion.counts()(r, k));
        rows.push_back(row);
    }
    return {{"trials", trials},       {"accuracy", accuracy}, {"per_class_accuracy", per_class},
            {"top_n_accuracy", top}, {"classes", names},     {"confusion", rows}};
}

std::vector<int> ranked_classes(const Vec& p)
{
    std::vector<int> idx(static_cast<std::size_t>(p.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[a] > p[b]; });
    return idx;
}

namespace {

void check_top_n(const std::vector<int>& n_values, int classes)
{
    for (int n : n_values)
        if (n < 1 || n > classes)
            throw std::out_of_range("top-n value " + std::to_string(n) + " outside 1.." + std::to_string(classes));
}

// Accumulates predictions in trial order.
struct Scorer {
    Metrics m;
    std::vector<int> ns;
    std::map<int, long> hits;

    Scorer(int classes, std::vector<int> n_values) : ns(std::move(n_values))
    {
        m.confusion = ConfusionMatrix(classes);
        check_top_n(ns, classes);
    }

    void add(int truth, const Vec& probabilities)
    {
        const auto ranked = ranked_classes(probabilities);
        m.confusion.add(truth, ranked.front());
        for (int n : ns)
            if (std::find(ranked.begin(), ranked.begin() + n, truth) != ranked.begin() + n)
                ++hits[n];
        ++m.trials;
    }

    Metrics finish()
    {
        m.accuracy = m.confusion.accuracy();
        m.per_class_accuracy = m.confusion.per_class_accuracy();
        for (int n : ns)
            m.top_n[n] = m.trials == 0 ? 0.0 : static_cast<double>(hits[n]) / static_cast<double>(m.trials);
        return m;
    }
};

}  // namespace

Metrics score(const Predictor& predict, const Dataset& data, const std::vector<int>& top_n)
{
    if (data.size() == 0)
        throw std::invalid_argument("cannot score an empty dataset");
    Scorer s(data.num_classes(), top_n);
    for (std::size_t i = 0; i < data.size(); ++i)
        s.add(data.labels[i], predict(data.features[i]));
    return s.finish();
}

std::map<int, double> top_n_accuracy(const Predictor& predict, const Dataset& data, const std::vector<int>& n_values)
{
    return score(predict, data, n_values).top_n;
}

Protocol parse_protocol(const std::string& name)
{
    if (name == "leave_one_out")
        return Protocol::leave_one_out;
    if (name == "leave_one_block_out")
        return Protocol::leave_one_block_out;
    if (name == "holdout")
        return Protocol::holdout;
    throw std::invalid_argument("unknown protocol '" + name + "' (leave_one_out|leave_one_block_out|holdout)");
}

std::string to_string(Protocol p)
{
    switch (p) {
    case Protocol::leave_one_out: return "leave_one_out";
    case Protocol::leave_one_block_out: return "leave_one_block_out";
    case Protocol::holdout: return "holdout";
    }
    return "leave_one_out";
}

std::vector<int> clip_top_n(const std::vector<int>& n_values, int classes)
{
    std::vector<int> out;
    for (int n : n_values)
        if (n <= classes)
            out.push_back(n);
    return out;
}

std::vector<int> assign_folds(const Dataset& data, const EvalOptions& opts)
{
    if (data.size() == 0)
        throw std::invalid_argument("cannot evaluate an empty dataset");
    std::vector<int> folds(data.size());
    switch (opts.protocol) {
    case Protocol::leave_one_out:
        if (data.size() > opts.max_loo_trials)
            throw std::invalid_argument("leave_one_out refused for " + std::to_string(data.size()) +
                                        " trials (limit " + std::to_string(opts.max_loo_trials) + ")");
        std::iota(folds.begin(), folds.end(), 0);
        break;
    case Protocol::leave_one_block_out: {
        if (opts.blocks < 0)
            throw std::invalid_argument("blocks must be >= 0");
        const auto within = data.within_class_index();
        for (std::size_t i = 0; i < data.size(); ++i)
            folds[i] = opts.blocks == 0 ? within[i] : within[i] % opts.blocks;
        break;
    }
    case Protocol::holdout: {
        if (!(opts.holdout_fraction > 0.0 && opts.holdout_fraction < 1.0))
            throw std::invalid_argument("holdout_fraction must be in (0, 1)");
        const auto within = data.within_class_index();
        const auto counts = data.class_counts();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const int n = counts[static_cast<std::size_t>(data.labels[i])];
            const int keep = n - std::max(1, static_cast<int>(std::lround(opts.holdout_fraction * n)));
            folds[i] = within[i] >= keep ? 0 : -1;  // -1: training only
        }
        break;
    }
    }
    return folds;
}

int worker_count()
{
    if (const char* env = std::getenv("HYREP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0)
            return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(worker_count()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr error;
    const auto work = [&] {
        for (;;) {
            std::size_t i = 0;
            {
                std::lock_guard lock(mu);
                if (next >= n || error)
                    return;
                i = next++;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error)
                    error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

Metrics cross_validate(const Dataset& data, const Trainer& trainer, const EvalOptions& opts)
{
    const std::vector<int> folds = assign_folds(data, opts);
    std::vector<int> fold_ids;
    for (int f : folds)
        if (f >= 0 && std::find(fold_ids.begin(), fold_ids.end(), f) == fold_ids.end())
            fold_ids.push_back(f);
    std::sort(fold_ids.begin(), fold_ids.end());

    std::vector<Vec> probabilities(data.size());
    parallel_for(fold_ids.size(), [&](std::size_t k) {
        const int fold = fold_ids[k];
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            (folds[i] == fold ? test_idx : train_idx).push_back(i);
        if (train_idx.empty())
            throw std::invalid_argument("fold " + std::to_string(fold) + " leaves no training data");
        const Predictor predict = trainer(data.subset(train_idx), fold);
        for (std::size_t i : test_idx)
            probabilities[i] = predict(data.features[i]);
    });

    Scorer s(data.num_classes(), clip_top_n(opts.top_n, data.num_classes()));
    for (std::size_t i = 0; i < data.size(); ++i)
        if (folds[i] >= 0)
            s.add(data.labels[i], probabilities[i]);
    return s.finish();
}

Trainer config_trainer(const TrainConfig& cfg)
{
    return [cfg](const Dataset& train_set, int) { return model_predictor(train(train_set, cfg).model); };
}

double mid_rank_percentile(double x, const std::vector<double>& sample)
{
    if (sample.empty())
        throw std::invalid_argument("empty sample");
    double below = 0.0, equal = 0.0;
    for (double v : sample) {
        if (v < x)
            below += 1.0;
        else if (v == x)
            equal += 1.0;
    }
    return 100.0 * (below + 0.5 * equal) / static_cast<double>(sample.size());
}

double ks_uniform_statistic(std::vector<double> sample)
{
    if (sample.empty())
        throw std::invalid_argument("empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = std::clamp(sample[i], 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

DistortionComparison distortion_vs_random(const ClusterTree& tree, const std::vector<int>& classes, int runs,
                                          std::uint64_t seed)
{
    if (runs < 10)
        throw std::invalid_argument("distortion_vs_random needs runs >= 10");
    DistortionComparison out;
    out.value = distortion(tree, classes);
    const std::vector<int> items = tree.items();
    std::mt19937_64 rng(seed);
    for (int r = 0; r < runs; ++r)
        out.random_values.push_back(distortion(random_tree(items, rng), classes));
    out.percentile = mid_rank_percentile(out.value, out.random_values);
    return out;
}

std::vector<BallPoint> tree_embedding(const Model& model, const Dataset& data, SimilaritySource source)
{
    const Curvature c(model.config().curvature);
    std::vector<BallPoint> out;
    out.reserve(data.size());
    for (const Vec& x : data.features) {
        Vec v;
        switch (source) {
        case SimilaritySource::logits: v = model.logits(x); break;
        case SimilaritySource::latent: v = model.latent(x); break;
        case SimilaritySource::input: v = x; break;
        }
        if (source == SimilaritySource::latent && model.config().space == Space::hyperbolic)
            v = log0(project_to_ball(v, c)).coords;
        const double n = v.norm();
        if (n > 0.0)
            v /= n;
        out.push_back(exp0(TangentVector{v}, c));
    }
    return out;
}

ClusterTree decode_model_tree(const Model& model, const Dataset& data, SimilaritySource source)
{
    return decode_tree(tree_embedding(model, data, source), data.labels);
}

json MiningResult::to_json(const std::vector<std::string>& names) const
{
    const auto name = [&](int k) {
        return k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)] : std::to_string(k);
    };
    json pairs = json::array();
    for (const auto& [pair, n] : counts.total) {
        json per = json::array();
        for (const auto& d : counts.per_dataset) {
            const auto it = d.find(pair);
            per.push_back(it == d.end() ? 0 : it->second);
        }
        pairs.push_back({{"pair", {name(pair.first), name(pair.second)}}, {"count", n}, {"per_dataset", per}});
    }
    json frequent = json::array();
    for (const auto& [a, b] : frequent_pairs)
        frequent.push_back({name(a), name(b)});
    json gs = json::array();
    for (const auto& g : groups) {
        json members = json::array();
        for (int k : g)
            members.push_back(name(k));
        gs.push_back(members);
    }
    return {{"runs_per_dataset", counts.runs},
            {"datasets", counts.per_dataset.size()},
            {"pairs", pairs},
            {"frequent_pairs", frequent},
            {"groups", gs},
            {"newick", newick_fragments(names)}};
}

std::vector<std::string> MiningResult::newick_fragments(const std::vector<std::string>& names) const
{
    std::vector<std::string> out;
    for (const auto& g : groups) {
        std::string s = "(";
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (i)
                s += ",";
            const int k = g[i];
            std::string label = k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)]
                                                                   : std::to_string(k);
            std::string quoted = "'";
            for (char ch : label)
                quoted += ch == '\'' ? std::string("''") : std::string(1, ch);
            s += quoted + "'";
        }
        out.push_back(s + ");");
    }
    return out;
}

std::vector<int> MiningResult::class_groups(int num_classes) const
{
    std::vector<int> out(static_cast<std::size_t>(num_classes), -1);
    int next = 0;
    for (const auto& g : groups) {
        for (int k : g)
            if (k >= 0 && k < num_classes)
                out[static_cast<std::size_t>(k)] = next;
        ++next;
    }
    for (auto& g : out)
        if (g < 0)
            g = next++;
    return out;
}

TreeProducer config_tree_producer(const TrainConfig& cfg)
{
    return [cfg](const Dataset& data, std::uint64_t seed) {
        TrainConfig run = cfg;
        run.seed = seed;
        const TrainState st = train(data, run);
        return decode_model_tree(st.model, data, run.similarity.source);
    };
}

MiningResult consolidate_substructures(SubstructureCounts counts, double threshold)
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("threshold must be in [0, 1]");
    MiningResult out;
    for (const auto& [pair, total] : counts.total) {
        bool keep = !counts.per_dataset.empty();
        for (const auto& d : counts.per_dataset) {
            const auto it = d.find(pair);
            const int n = it == d.end() ? 0 : it->second;
            if (!(n > 0 && static_cast<double>(n) / counts.runs > threshold))
                keep = false;
        }
        if (keep)
            out.frequent_pairs.push_back(pair);
    }

    // Union-find over classes joined by frequent pairs.
    std::map<int, int> parent;
    const std::function<int(int)> find = [&](int x) {
        auto it = parent.find(x);
        if (it == parent.end()) {
            parent[x] = x;
            return x;
        }
        if (it->second == x)
            return x;
        const int r = find(it->second);
        parent[x] = r;
        return r;
    };
    for (const auto& [a, b] : out.frequent_pairs) {
        const int ra = find(a);
        const int rb = find(b);
        if (ra != rb)
            parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    std::map<int, std::vector<int>> groups;
    for (const auto& [x, p] : parent)
        groups[find(x)].push_back(x);
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end());
        out.groups.push_back(members);
    }
    std::sort(out.groups.begin(), out.groups.end());
    out.counts = std::move(counts);
    return out;
}

MiningResult mine_substructures(const std::vector<Dataset>& datasets, int runs_per_dataset, double threshold,
                                const TreeProducer& producer, std::uint64_t seed)
{
    if (datasets.empty())
        throw std::invalid_argument("mine_substructures needs at least one dataset");
    if (runs_per_dataset < 1)
        throw std::invalid_argument("runs_per_dataset must be >= 1");
    const std::size_t total_runs = datasets.size() * static_cast<std::size_t>(runs_per_dataset);
    std::vector<std::vector<ClassPair>> cherries(total_runs);
    parallel_for(total_runs, [&](std::size_t r) {
        const std::size_t d = r / static_cast<std::size_t>(runs_per_dataset);
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::uint32_t words[2];
        seq.generate(words, words + 2);
        const std::uint64_t run_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
        cherries[r] = producer(datasets[d], run_seed).cherries();
    });

    SubstructureCounts counts;
    counts.runs = runs_per_dataset;
    counts.per_dataset.resize(datasets.size());
    for (std::size_t r = 0; r < total_runs; ++r) {
        const std::size_t d = r / static_cast<std::size_t>(runs_per_dataset);
        for (const auto& pair : cherries[r]) {
            ++counts.per_dataset[d][pair];
            ++counts.total[pair];
        }
    }
    return consolidate_substructures(std::move(counts), threshold);
}

}  // namespace hyrep
