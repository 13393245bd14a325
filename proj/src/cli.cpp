#include "hyrep/cli.hpp"

#include "hyrep/gradcheck.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace hyrep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        double x = 0.0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (item.empty() || ec != std::errc{} || p != item.data() + item.size())
            throw ConfigError(key + ": '" + v + "' is not a comma-separated number list");
        out.push_back(x);
    }
    if (out.empty())
        throw ConfigError(key + ": empty list");
    return out;
}

double parse_number(const std::string& key, const std::string& v)
{
    const auto xs = parse_list(key, v);
    if (xs.size() != 1)
        throw ConfigError(key + ": expected a single number");
    return xs.front();
}

int parse_integer(const std::string& key, const std::string& v)
{
    const double x = parse_number(key, v);
    if (x != std::floor(x) || std::abs(x) > 2e9)
        throw ConfigError(key + ": expected an integer");
    return static_cast<int>(x);
}

std::string trim(std::string s)
{
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

}  // namespace

void RunConfig::set(const std::string& raw_key, const std::string& raw_value)
{
    const std::string key = trim(raw_key);
    const std::string v = trim(raw_value);
    try {
        if (key == "preset") {
            preset = v;
        } else if (key == "data.trials_per_class") {
            synthetic.trials_per_class = parse_integer(key, v);
        } else if (key == "data.feature_dim") {
            synthetic.feature_dim = parse_integer(key, v);
        } else if (key == "data.noise_sigma") {
            synthetic.noise_sigma = parse_number(key, v);
        } else if (key == "data.level_scales") {
            synthetic.level_scales = parse_list(key, v);
        } else if (key == "data.classes_per_group") {
            classes_per_group = parse_integer(key, v);
        } else if (key == "eval.protocol") {
            eval.protocol = parse_protocol(v);
        } else if (key == "eval.blocks") {
            eval.blocks = parse_integer(key, v);
        } else if (key == "eval.holdout_fraction") {
            eval.holdout_fraction = parse_number(key, v);
        } else if (key == "eval.top_n") {
            eval.top_n.clear();
            for (double x : parse_list(key, v))
                eval.top_n.push_back(static_cast<int>(x));
        } else if (key == "distortion.runs") {
            distortion_runs = parse_integer(key, v);
        } else if (key == "mine.runs") {
            mine_runs = parse_integer(key, v);
        } else if (key == "mine.threshold") {
            mine_threshold = parse_number(key, v);
        } else if (key == "mine.datasets") {
            mine_datasets = parse_integer(key, v);
        } else {
            apply_setting(train, key, v);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void RunConfig::finalize()
{
    try {
        synthetic.taxonomy = builtin_taxonomy(preset, classes_per_group);
        synthetic.seed = train.seed;
        synthetic.validate();
        train.validate();
        if (distortion_runs < 10)
            throw std::invalid_argument("distortion.runs must be >= 10");
        if (mine_runs < 1 || mine_datasets < 1)
            throw std::invalid_argument("mine.runs and mine.datasets must be >= 1");
        if (!(mine_threshold >= 0.0 && mine_threshold <= 1.0))
            throw std::invalid_argument("mine.threshold must be in [0, 1]");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::vector<std::string> verbs()
{
    return {"gen",        "ingest", "train",          "eval",          "cluster",
            "distortion", "mine",   "compare-spaces", "constraint-exp", "gradcheck"};
}

std::string usage()
{
    return "usage: hyrep <verb> [--config FILE] [--seed N] [--out DIR] [--set key=value]... [--preset NAME]\n"
           "verbs:\n"
           "  gen             synthetic dataset from a preset taxonomy\n"
           "  ingest          spike/marker CSV -> binned dataset (--spikes, --markers)\n"
           "  train           train a model (--data)\n"
           "  eval            score a model (--data --model) or cross-validate (--data)\n"
           "  cluster         decode and export the class tree (--data --model)\n"
           "  distortion      tree distortion against random trees (--data --model)\n"
           "  mine            common sibling pairs over repeated runs (--data ...)\n"
           "  compare-spaces  hyperbolic vs euclidean variants on the same folds (--data)\n"
           "  constraint-exp  articulation vs mined vs no constraint (--data)\n"
           "  gradcheck       finite-difference gradient suite\n";
}

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    std::vector<std::string> sets;
    std::string preset;
    long long seed = -1;
};

struct VerbArgs {
    std::vector<std::string> data;
    std::string model;
    std::string spikes;
    std::string markers;
};

RunConfig build_config(const Common& c)
{
    RunConfig rc;
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        if (!in)
            throw ConfigError("cannot open config " + c.config);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            if (trim(line).empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(c.config + ":" + std::to_string(lineno) + ": expected key = value");
            try {
                rc.set(line.substr(0, eq), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(c.config + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + s + "'");
        rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.preset.empty())
        rc.preset = c.preset;
    if (c.seed >= 0)
        rc.train.seed = static_cast<std::uint64_t>(c.seed);
    rc.finalize();
    return rc;
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

json meta(const RunConfig& rc, const std::string& verb)
{
    return {{"verb", verb}, {"seed", rc.train.seed}, {"config", to_config_text(rc.train)}};
}

Dataset require_dataset(const VerbArgs& a)
{
    if (a.data.empty())
        throw ConfigError("--data is required");
    return load_dataset(a.data.front());
}

Model require_model(const VerbArgs& a)
{
    if (a.model.empty())
        throw ConfigError("--model is required");
    try {
        return Model::load(a.model);
    } catch (const std::exception& e) {
        throw ParseError(a.model + ": " + e.what());
    }
}

std::vector<int> distortion_classes(const Dataset& d)
{
    std::vector<int> groups = d.class_groups();
    if (groups.empty())
        throw ConfigError("dataset has no class paths; distortion needs class groups");
    return groups;
}

TrainConfig variant(TrainConfig cfg, Space space, bool clustering)
{
    cfg.model.space = space;
    if (!clustering) {
        cfg.schedule.mode = ScheduleMode::fixed;
        cfg.schedule.start = {1.0, 0.0};
    }
    return cfg;
}

int cmd_gen(const RunConfig& rc, const Common& c, std::ostream& out)
{
    const Dataset d = generate_synthetic(rc.synthetic);
    const fs::path path = fs::path(c.out) / "dataset.json";
    fs::create_directories(c.out);
    save_dataset(d, path);
    out << "wrote " << path.string() << " (" << d.size() << " trials, " << d.num_classes() << " classes)\n";
    return kExitOk;
}

int cmd_ingest(const VerbArgs& a, const Common& c, std::ostream& out)
{
    if (a.spikes.empty() || a.markers.empty())
        throw ConfigError("ingest needs --spikes and --markers");
    const Dataset d = ingest_csv(a.spikes, a.markers);
    const fs::path path = fs::path(c.out) / "dataset.json";
    fs::create_directories(c.out);
    save_dataset(d, path);
    out << "wrote " << path.string() << " (" << d.size() << " trials, " << d.n_units << " units, " << d.n_bins
        << " bins)\n";
    return kExitOk;
}

int cmd_train(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    const TrainState st = train(d, rc.train);
    fs::create_directories(c.out);
    st.model.save(fs::path(c.out) / "model.json");
    json hist = meta(rc, "train");
    hist["epochs"] = st.epoch;
    hist["steps"] = st.steps;
    hist["loss_history"] = st.loss_history;
    write_json(fs::path(c.out) / "loss_history.json", hist);
    out << "trained " << st.epoch << " epochs, final loss " << std::setprecision(6) << st.loss_history.back()
        << "\n";
    return kExitOk;
}

int cmd_eval(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    Metrics m;
    json j = meta(rc, "eval");
    if (!a.model.empty()) {
        m = score(model_predictor(require_model(a)), d, clip_top_n(rc.eval.top_n, d.num_classes()));
        j["protocol"] = "fixed_model";
    } else {
        m = cross_validate(d, config_trainer(rc.train), rc.eval);
        j["protocol"] = to_string(rc.eval.protocol);
    }
    j["metrics"] = m.to_json(d.classes);
    j["accuracy"] = m.accuracy;
    write_json(fs::path(c.out) / "metrics.json", j);
    write_text(fs::path(c.out) / "confusion.csv", m.confusion.to_csv(d.classes));
    out << "accuracy " << std::setprecision(6) << m.accuracy << " over " << m.trials << " trials\n";
    return kExitOk;
}

int cmd_cluster(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    const Model model = require_model(a);
    const ClusterTree tree = decode_model_tree(model, d, rc.train.similarity.source);
    std::vector<std::string> groups;
    for (const auto& p : d.paths)
        groups.push_back(p.front());
    write_text(fs::path(c.out) / "tree.nwk", tree.to_newick(d.classes) + "\n");
    json j = meta(rc, "cluster");
    j["tree"] = tree.to_json(d.classes, groups);
    write_json(fs::path(c.out) / "tree.json", j);
    out << tree.to_newick(d.classes) << "\n";
    return kExitOk;
}

int cmd_distortion(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    const Model model = require_model(a);
    const ClusterTree tree = decode_model_tree(model, d, rc.train.similarity.source);
    const auto cmp = distortion_vs_random(tree, distortion_classes(d), rc.distortion_runs, rc.train.seed);
    json j = meta(rc, "distortion");
    j["distortion"] = cmp.value;
    j["percentile"] = cmp.percentile;
    j["random_distortions"] = cmp.random_values;
    j["tree"] = tree.to_newick(d.classes);
    write_json(fs::path(c.out) / "distortion.json", j);
    out << "distortion " << std::setprecision(6) << cmp.value << ", percentile " << cmp.percentile << " of "
        << rc.distortion_runs << " random trees\n";
    return kExitOk;
}

std::vector<Dataset> mining_datasets(const RunConfig& rc, const VerbArgs& a)
{
    std::vector<Dataset> out;
    for (const auto& p : a.data)
        out.push_back(load_dataset(p));
    if (out.empty()) {
        for (int i = 0; i < rc.mine_datasets; ++i) {
            SyntheticSpec s = rc.synthetic;
            s.seed = rc.train.seed + static_cast<std::uint64_t>(i);
            out.push_back(generate_synthetic(s));
        }
    }
    return out;
}

int cmd_mine(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const std::vector<Dataset> sets = mining_datasets(rc, a);
    const MiningResult r =
        mine_substructures(sets, rc.mine_runs, rc.mine_threshold, config_tree_producer(rc.train), rc.train.seed);
    json j = meta(rc, "mine");
    j["result"] = r.to_json(sets.front().classes);
    j["threshold"] = rc.mine_threshold;
    write_json(fs::path(c.out) / "substructures.json", j);
    std::string nwk;
    for (const auto& f : r.newick_fragments(sets.front().classes))
        nwk += f + "\n";
    write_text(fs::path(c.out) / "substructures.nwk", nwk);
    out << r.groups.size() << " consensus groups\n" << nwk;
    return kExitOk;
}

std::string percent(double x)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * x;
    return ss.str();
}

int cmd_compare(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    const struct {
        const char* name;
        Space space;
        bool clustering;
    } variants[] = {{"HYSpeech", Space::hyperbolic, true},
                    {"HYSpeech-N", Space::hyperbolic, false},
                    {"HYSpeech-EU", Space::euclidean, true}};
    json j = meta(rc, "compare-spaces");
    j["protocol"] = to_string(rc.eval.protocol);
    json rows = json::array();
    std::string csv = "variant,space,clustering,accuracy\n";
    for (const auto& v : variants) {
        const Metrics m = cross_validate(d, config_trainer(variant(rc.train, v.space, v.clustering)), rc.eval);
        rows.push_back({{"variant", v.name},
                        {"space", to_string(v.space)},
                        {"clustering", v.clustering},
                        {"accuracy", m.accuracy},
                        {"top_n_accuracy", m.to_json(d.classes)["top_n_accuracy"]}});
        csv += std::string(v.name) + "," + to_string(v.space) + "," + (v.clustering ? "yes" : "no") + "," +
               percent(m.accuracy) + "\n";
        out << std::left << std::setw(12) << v.name << " " << percent(m.accuracy) << "%\n";
    }
    j["variants"] = rows;
    write_json(fs::path(c.out) / "compare.json", j);
    write_text(fs::path(c.out) / "compare.csv", csv);
    return kExitOk;
}

int cmd_constraint(const RunConfig& rc, const VerbArgs& a, const Common& c, std::ostream& out)
{
    const Dataset d = require_dataset(a);
    const std::vector<int> articulation = distortion_classes(d);
    const MiningResult mined =
        mine_substructures({d}, rc.mine_runs, rc.mine_threshold, config_tree_producer(rc.train), rc.train.seed);
    const std::vector<int> mined_groups = mined.class_groups(d.num_classes());

    const auto constrained = [&](const std::vector<int>& groups, double mu) {
        TrainConfig cfg = rc.train;
        cfg.mu = mu;
        return [cfg, groups](const Dataset& train_set, int) {
            return model_predictor(train_with_constraint(train_set, cfg, groups).model);
        };
    };
    const struct {
        const char* name;
        const std::vector<int>* groups;
        double mu;
    } rows_spec[] = {{"articulation", &articulation, rc.train.mu},
                     {"neural_substructure", &mined_groups, rc.train.mu},
                     {"without_constraint", &articulation, 0.0}};
    json j = meta(rc, "constraint-exp");
    j["protocol"] = to_string(rc.eval.protocol);
    j["mined"] = mined.to_json(d.classes);
    json rows = json::array();
    std::string csv = "constraint,accuracy\n";
    for (const auto& r : rows_spec) {
        const Metrics m = cross_validate(d, constrained(*r.groups, r.mu), rc.eval);
        rows.push_back({{"constraint", r.name}, {"mu", r.mu}, {"accuracy", m.accuracy}});
        csv += std::string(r.name) + "," + percent(m.accuracy) + "\n";
        out << std::left << std::setw(20) << r.name << " " << percent(m.accuracy) << "%\n";
    }
    j["rows"] = rows;
    write_json(fs::path(c.out) / "constraint.json", j);
    write_text(fs::path(c.out) / "constraint.csv", csv);
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc, const Common& c, bool write, std::ostream& out)
{
    auto results = primitive_gradchecks(rc.train.seed);
    const auto joint = joint_loss_gradchecks(rc.train.seed);
    double worst_primitive = 0.0, worst_joint = 0.0;
    for (const auto& r : results)
        worst_primitive = std::max(worst_primitive, r.max_rel_error);
    for (const auto& r : joint)
        worst_joint = std::max(worst_joint, r.max_rel_error);
    results.insert(results.end(), joint.begin(), joint.end());
    json rows = json::array();
    for (const auto& r : results) {
        out << std::left << std::setw(36) << r.name << " " << std::scientific << std::setprecision(3)
            << r.max_rel_error << "\n";
        rows.push_back({{"name", r.name}, {"max_rel_error", r.max_rel_error}, {"points", r.points}});
    }
    const bool ok = worst_primitive < 1e-4 && worst_joint < 1e-3;
    out << "max rel. error " << std::scientific << std::setprecision(3) << std::max(worst_primitive, worst_joint)
        << (ok ? " (pass)" : " (FAIL)") << "\n";
    if (write) {
        json j = meta(rc, "gradcheck");
        j["checks"] = rows;
        j["pass"] = ok;
        write_json(fs::path(c.out) / "gradcheck.json", j);
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    const auto known = verbs();
    if (args.empty() || args.front() == "-h" || args.front() == "--help") {
        (args.empty() ? err : out) << usage();
        return args.empty() ? kExitUsage : kExitOk;
    }
    const std::string verb = args.front();
    if (std::find(known.begin(), known.end(), verb) == known.end()) {
        err << "hyrep: unknown verb '" << verb << "'\n" << usage();
        return kExitUsage;
    }

    CLI::App app{"hyrep " + verb, "hyrep " + verb};
    Common common;
    VerbArgs va;
    app.add_option("--config", common.config, "key = value config file");
    app.add_option("--seed", common.seed, "seed for every random stream")->check(CLI::NonNegativeNumber);
    app.add_option("--out", common.out, "output directory");
    app.add_option("--set", common.sets, "key=value override (repeatable)");
    app.add_option("--preset", common.preset, "taxonomy preset")->check(CLI::IsMember(builtin_taxonomy_kinds()));
    if (verb != "gen" && verb != "gradcheck" && verb != "ingest") {
        auto* data = app.add_option("--data", va.data, "dataset JSON (repeatable for mine)");
        if (verb != "mine")
            data->required();
    }
    if (verb == "eval" || verb == "cluster" || verb == "distortion") {
        auto* model = app.add_option("--model", va.model, "model checkpoint");
        if (verb != "eval")
            model->required();
    }
    if (verb == "ingest") {
        app.add_option("--spikes", va.spikes, "spike CSV (unit,timestamp)")->required();
        app.add_option("--markers", va.markers, "marker CSV (trial,prompt,go,ao_start,ao_end,end[,label])")
            ->required();
    }

    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "hyrep " << verb << ": " << e.what() << "\n" << usage();
        return kExitUsage;
    }

    try {
        const RunConfig rc = build_config(common);
        if (verb == "gen")
            return cmd_gen(rc, common, out);
        if (verb == "ingest")
            return cmd_ingest(va, common, out);
        if (verb == "train")
            return cmd_train(rc, va, common, out);
        if (verb == "eval")
            return cmd_eval(rc, va, common, out);
        if (verb == "cluster")
            return cmd_cluster(rc, va, common, out);
        if (verb == "distortion")
            return cmd_distortion(rc, va, common, out);
        if (verb == "mine")
            return cmd_mine(rc, va, common, out);
        if (verb == "compare-spaces")
            return cmd_compare(rc, va, common, out);
        if (verb == "constraint-exp")
            return cmd_constraint(rc, va, common, out);
        return cmd_gradcheck(rc, common, app.count("--out") > 0, out);
    } catch (const ConfigError& e) {
        err << "hyrep " << verb << ": configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "hyrep " << verb << ": input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "hyrep " << verb << ": " << e.what() << "\n";
        return kExitRuntime;
    }
}

int run(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace hyrep::cli
