// Acceptance suite. `acceptance <id>` runs one criterion, `acceptance all`
// runs every criterion; each prints one PASS/FAIL line. Exit status is 0
// only when every selected criterion passes.

#include "hyrep/ball.hpp"
#include "hyrep/cluster.hpp"
#include "hyrep/data.hpp"
#include "hyrep/eval.hpp"
#include "hyrep/gradcheck.hpp"
#include "hyrep/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace hyrep;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(double x, int precision = 3)
{
    std::ostringstream ss;
    ss.precision(precision);
    ss << x;
    return ss.str();
}

std::string pct(double x)
{
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(2);
    ss << 100.0 * x;
    return ss.str();
}

Vec gaussian(std::mt19937_64& rng, Eigen::Index dim)
{
    std::normal_distribution<double> g;
    Vec v(dim);
    for (auto& x : v)
        x = g(rng);
    return v;
}

BallPoint random_point(std::mt19937_64& rng, Eigen::Index dim, Curvature c)
{
    std::uniform_real_distribution<double> u(0.0, 0.9);
    return BallPoint(gaussian(rng, dim).normalized() * u(rng) * c.max_norm(), c);
}

// 1 ----------------------------------------------------------------------

Outcome geometry()
{
    const double tol = 1e-9;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> radius(0.0, 5.0);
    double worst = 0.0;
    int cases = 0;
    for (Eigen::Index dim : {2, 16, 256}) {
        for (double cv : {0.5, 1.0, 2.0}) {
            const Curvature c(cv);
            const BallPoint o = BallPoint::origin(dim, c);
            for (int i = 0; i < 1000; ++i, ++cases) {
                const BallPoint x = random_point(rng, dim, c);
                const BallPoint y = random_point(rng, dim, c);
                const BallPoint z = random_point(rng, dim, c);
                const Vec v = gaussian(rng, dim).normalized() * radius(rng) / c.sqrt();
                const double errs[] = {
                    (mobius_add(o, y).coords() - y.coords()).lpNorm<Eigen::Infinity>(),
                    mobius_add(mobius_neg(x), x).coords().lpNorm<Eigen::Infinity>(),
                    (log0(exp0({v}, c)).coords - v).lpNorm<Eigen::Infinity>(),
                    (exp0(log0(x), c).coords() - x.coords()).lpNorm<Eigen::Infinity>(),
                    cv == 1.0 ? std::abs(dist(x, y) - dist_arccosh(x, y)) : 0.0,
                    std::max(0.0, dist(x, z) - dist(x, y) - dist(y, z)),
                };
                for (double e : errs)
                    worst = std::max(worst, e);
            }
        }
    }
    return {worst <= tol, std::to_string(cases) + " cases, max error " + fmt(worst)};
}

// 2 ----------------------------------------------------------------------

Outcome gradients()
{
    double prim = 0.0, joint = 0.0;
    std::string prim_name, joint_name;
    for (const auto& r : primitive_gradchecks(2024))
        if (r.max_rel_error >= prim) {
            prim = r.max_rel_error;
            prim_name = r.name;
        }
    for (const auto& r : joint_loss_gradchecks(2024))
        if (r.max_rel_error >= joint) {
            joint = r.max_rel_error;
            joint_name = r.name;
        }
    return {prim < 1e-4 && joint < 1e-3,
            "primitives " + fmt(prim) + " (" + prim_name + "), joint " + fmt(joint) + " (" + joint_name + ")"};
}

// 3 ----------------------------------------------------------------------

// Fits one ball point per item to a fixed similarity matrix with the tree
// loss over all triplets.
std::vector<BallPoint> fit_embedding(const Mat& w, std::mt19937_64& rng)
{
    const int n = static_cast<int>(w.rows());
    const Eigen::Index dim = 2;
    const Curvature c(1.0);
    std::vector<Triplet> triplets;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k)
                triplets.push_back({i, j, k});
    std::uniform_real_distribution<double> u(0.0, 0.05);
    std::vector<BallPoint> pts;
    for (int i = 0; i < n; ++i)
        pts.emplace_back(gaussian(rng, dim).normalized() * u(rng), c);

    SimilarityConfig cfg;
    cfg.tau = 0.1;
    for (int step = 0; step < 500; ++step) {
        tape::Graph g;
        tape::Bindings b;
        std::vector<tape::Var> vars;
        for (int i = 0; i < n; ++i) {
            const std::string name = "x" + std::to_string(i);
            b[name] = pts[static_cast<std::size_t>(i)].coords();
            vars.push_back(g.parameter(name, dim));
        }
        (void)record_tree_loss(g, vars, triplets, cfg, {Space::hyperbolic, c.value()}, &w);
        g.forward(b);
        const auto grads = g.backward();
        for (int i = 0; i < n; ++i)
            pts[static_cast<std::size_t>(i)] =
                rsgd_step(pts[static_cast<std::size_t>(i)], grads.at("x" + std::to_string(i)), 0.01);
    }
    return pts;
}

Outcome dasgupta()
{
    int within = 0;
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(inst));
        const int n = 4 + inst % 4;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Mat w = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                w(i, j) = w(j, i) = u(rng);
        std::vector<int> items(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            items[static_cast<std::size_t>(i)] = i;
        const double cost = dasgupta_cost(decode_tree(fit_embedding(w, rng), items), w);
        const double best = best_tree_bruteforce(w).cost;
        within += cost <= 1.1 * best;
        worst = std::max(worst, cost / best);
    }
    return {within >= 16, std::to_string(within) + "/20 within 10% of optimum, worst ratio " + fmt(worst, 4)};
}

// 4 ----------------------------------------------------------------------

SyntheticSpec consonant_spec(std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.seed = seed;
    return spec;
}

EvalOptions block_protocol()
{
    EvalOptions opts;
    opts.protocol = Protocol::leave_one_block_out;
    opts.blocks = 5;
    opts.top_n = {1};
    return opts;
}

Outcome table1()
{
    double hy = 0.0, eu = 0.0, nn = 0.0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
        const Dataset d = generate_synthetic(consonant_spec(static_cast<std::uint64_t>(s)));
        TrainConfig base;
        base.seed = static_cast<std::uint64_t>(s);
        TrainConfig euclid = base;
        euclid.model.space = Space::euclidean;
        TrainConfig no_tree = base;
        no_tree.schedule.mode = ScheduleMode::fixed;
        no_tree.schedule.start = {1.0, 0.0};
        const double a = cross_validate(d, config_trainer(base), block_protocol()).accuracy;
        const double b = cross_validate(d, config_trainer(euclid), block_protocol()).accuracy;
        const double n = cross_validate(d, config_trainer(no_tree), block_protocol()).accuracy;
        std::cout << "  seed " << s << ": HYSpeech " << pct(a) << "  HYSpeech-EU " << pct(b) << "  HYSpeech-N "
                  << pct(n) << std::endl;
        hy += a / seeds;
        eu += b / seeds;
        nn += n / seeds;
    }
    const bool pass = hy - eu >= 0.03 && hy - nn >= 0.01;
    return {pass, "mean HYSpeech " + pct(hy) + "%, HYSpeech-EU " + pct(eu) + "%, HYSpeech-N " + pct(nn) +
                      "% (need HY-EU >= 3 pt, HY-N >= 1 pt)"};
}

// 5 ----------------------------------------------------------------------

Outcome distortion_separation()
{
    int separated = 0;
    std::string values;
    for (int s = 0; s < 5; ++s) {
        const Dataset d = generate_synthetic(consonant_spec(static_cast<std::uint64_t>(s)));
        TrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(s);
        const TrainState st = train(d, cfg);
        const ClusterTree tree = decode_model_tree(st.model, d, cfg.similarity.source);
        const auto cmp = distortion_vs_random(tree, d.class_groups(), 100, cfg.seed);
        separated += cmp.percentile <= 5.0;
        values += (values.empty() ? "" : ", ") + fmt(cmp.percentile);
    }
    return {separated >= 4, std::to_string(separated) + "/5 seeds at percentile <= 5 (" + values + ")"};
}

// 6 ----------------------------------------------------------------------

Outcome table2()
{
    const int seeds = 5;
    double mined_acc = 0.0, plain_acc = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const Dataset d = generate_synthetic(consonant_spec(100 + static_cast<std::uint64_t>(s)));
        EvalOptions opts;
        opts.protocol = Protocol::holdout;
        opts.holdout_fraction = 0.2;
        opts.top_n = {1};
        TrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(s);

        int mined_groups = 0;
        const Trainer with_mined = [&](const Dataset& train_set, int) {
            const MiningResult r = mine_substructures({train_set}, 5, 0.5, config_tree_producer(cfg), cfg.seed);
            mined_groups = static_cast<int>(r.groups.size());
            return model_predictor(
                train_with_constraint(train_set, cfg, r.class_groups(train_set.num_classes())).model);
        };
        const Trainer without = [&](const Dataset& train_set, int) {
            TrainConfig plain = cfg;
            plain.mu = 0.0;
            return model_predictor(train_with_constraint(train_set, plain, train_set.class_groups()).model);
        };
        const double a = cross_validate(d, with_mined, opts).accuracy;
        const double b = cross_validate(d, without, opts).accuracy;
        std::cout << "  seed " << s << ": mined " << pct(a) << " (" << mined_groups << " groups)  none " << pct(b)
                  << std::endl;
        mined_acc += a / seeds;
        plain_acc += b / seeds;
    }
    return {mined_acc >= plain_acc - 0.005,
            "mean mined " + pct(mined_acc) + "%, no constraint " + pct(plain_acc) + "% (slack 0.5 pt)"};
}

// 7 ----------------------------------------------------------------------

Outcome binning()
{
    SpikeTrain example;
    example.units = {{0.01, 0.05, 0.12}};
    example.length = 0.2;
    const auto counts = bin_spikes(example);
    const std::vector<int> expected{2, 2, 2, 1, 1};
    bool match = counts.rows() == 1 && counts.cols() == 5;
    for (int t = 0; match && t < 5; ++t)
        match = counts(0, t) == expected[static_cast<std::size_t>(t)];

    SpikeTrain trial;
    trial.units = {{1.2, 2.6, 3.9}, {}};
    trial.length = 8.0;
    trial.prompt = 1.0;
    trial.go = 2.0;
    trial.ao_start = 3.0;
    trial.ao_end = 3.5;
    trial.trial_end = 6.0;
    const SpikeTrain seg = segment_trial(trial);
    const auto binned = bin_spikes(seg);
    const bool seventy_seven = std::abs(seg.length - 2.0) < 1e-12 && binned.cols() == 77 && bin_count(2.0) == 77;
    return {match && seventy_seven, "worked example " + std::string(match ? "matches" : "differs") +
                                        ", 2.0 s segment gives " + std::to_string(binned.cols()) + " bins"};
}

// 8 ----------------------------------------------------------------------

Outcome determinism()
{
    const Dataset d = generate_synthetic(consonant_spec(8));
    TrainConfig cfg;
    cfg.seed = 8;
    const TrainState a = train(d, cfg);
    const TrainState b = train(d, cfg);
    const std::string ca = a.model.to_json().dump();
    const std::string cb = b.model.to_json().dump();
    const bool same_history =
        a.loss_history.size() == b.loss_history.size() &&
        std::equal(a.loss_history.begin(), a.loss_history.end(), b.loss_history.begin(),
                   [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
    return {ca == cb && same_history, std::string("checkpoints ") + (ca == cb ? "identical" : "differ") +
                                          ", loss histories " + (same_history ? "identical" : "differ")};
}

const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> all{
        {1, "geometry identities", 10, geometry},
        {2, "gradient checks", 60, gradients},
        {3, "dasgupta oracle", 300, dasgupta},
        {4, "hyperbolic > euclidean pattern", 1800, table1},
        {5, "distortion separation", 600, distortion_separation},
        {6, "mined constraint pattern", 1800, table2},
        {7, "binning exactness", 1, binning},
        {8, "determinism", 600, determinism},
    };
    return all;
}

bool run(const Criterion& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << c.id << " " << c.name << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(secs) << " s, budget " << c.budget_s << " s]" << std::endl;
    return o.pass;
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: acceptance <1-8|all>\n";
        return 64;
    }
    const std::string which = argv[1];
    bool ok = true;
    bool matched = false;
    for (const auto& c : criteria()) {
        if (which == "all" || which == std::to_string(c.id)) {
            matched = true;
            ok = run(c) && ok;
        }
    }
    if (!matched) {
        std::cerr << "unknown criterion '" << which << "'\n";
        return 64;
    }
    return ok ? 0 : 1;
}
