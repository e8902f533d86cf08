#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "fgnn/checkers.hpp"
#include "fgnn/kernels.hpp"
#include "fgnn/network.hpp"
#include "fgnn/train.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw fgnn::Error("cannot read '" + path + "'");
    return nlohmann::json::parse(is);
}

void apply_threads(int threads) {
    if (threads == 1) {
        fgnn::kernels::set_exec_mode(fgnn::kernels::ExecMode::Serial);
    } else if (threads > 1) {
        omp_set_num_threads(threads);
    }
}

nlohmann::json named_group(const std::string& name) {
    if (name == "trivial") return fgnn::trivial_group();
    if (name == "flip") return fgnn::flip_group();
    if (name == "klein") return fgnn::klein_group();
    if (name == "d8") return fgnn::d8_group();
    throw fgnn::Error("unknown group preset '" + name + "' (trivial|flip|klein|d8)");
}

int cmd_verify_group(const std::string& file) {
    fgnn::FiniteGroup g = fgnn::group_from_json(load_json(file));
    std::cout << "group of order " << g.order << "\n";
    for (const auto& e : g.elements)
        std::cout << "  [" << e.index + 1 << "] " << e.word << " = " << g.actions[e.index].str()
                  << "\n";
    fgnn::AxiomReport rep = fgnn::verify_axioms(g);
    std::cout << rep.str();
    return rep.all_pass() ? 0 : 1;
}

int cmd_check_equivariance(const std::string& spec_file, const std::string& group_file,
                           int samples, double tol, uint64_t seed) {
    fgnn::NetworkSpec spec = fgnn::NetworkSpec::from_json(load_json(spec_file));
    fgnn::BuiltNetwork net(spec, seed);
    fgnn::FiniteGroup check =
        group_file.empty() ? net.group() : fgnn::group_from_json(load_json(group_file));
    fgnn::EquivarianceReport rep = fgnn::check_network_equivariance(
        net, check, spec.output_action, samples, static_cast<fgnn::real_t>(tol), seed + 1);
    std::cout << "network '" << spec.name << "', " << net.param_count() << " parameters, group order "
              << check.order << "\n"
              << rep.str();
    return rep.pass ? 0 : 1;
}

int cmd_gen_dataset(uint64_t seed, int games, const std::string& out, bool forced_capture) {
    fgnn::checkers::Dataset d = fgnn::checkers::gen_synthetic_dataset(seed, games, forced_capture);
    fgnn::checkers::save_dataset_jsonl(d, out);
    std::cout << "wrote " << d.records.size() << " positions from " << games << " games to " << out
              << "\n";
    return 0;
}

int cmd_train(const std::string& spec_file, const std::string& data_file,
              const std::string& config_file, const std::string& out_dir) {
    fgnn::NetworkSpec spec = fgnn::NetworkSpec::from_json(load_json(spec_file));
    fgnn::checkers::Dataset data = fgnn::checkers::load_dataset_jsonl(data_file);
    fgnn::TrainConfig cfg = config_file.empty() ? fgnn::TrainConfig{}
                                                : fgnn::TrainConfig::from_json(load_json(config_file));
    fgnn::BuiltNetwork net(spec, cfg.seed);

    std::filesystem::create_directories(out_dir);
    std::vector<fgnn::MetricsRecord> metrics = fgnn::train(net, data, cfg);
    fgnn::write_metrics_csv(out_dir + "/metrics.csv", spec.name, net.group().order,
                            net.param_count(), cfg.seed, metrics);
    net.params().save(out_dir + "/weights.fgnn");
    for (const auto& m : metrics)
        std::cout << "epoch " << m.epoch << ": train_loss " << m.train_loss << " train_top1 "
                  << m.train_top1 << " test_top1 " << m.test_top1 << " test_top3 " << m.test_top3
                  << "\n";

    if (net.group().order > 1) {
        fgnn::EquivarianceReport rep = fgnn::check_network_equivariance(
            net, net.group(), spec.output_action, 10, fgnn::real_t(1e-9), cfg.seed + 7);
        std::cout << "post-training equivariance: " << rep.str();
        if (!rep.pass) return 1;
    }
    return 0;
}

int cmd_eval(const std::string& weights, const std::string& spec_file,
             const std::string& data_file) {
    fgnn::NetworkSpec spec = fgnn::NetworkSpec::from_json(load_json(spec_file));
    fgnn::checkers::Dataset data = fgnn::checkers::load_dataset_jsonl(data_file);
    fgnn::BuiltNetwork net(spec, 0);
    net.param_count();  // materialize parameters before overwriting them
    net.params().load(weights);
    std::vector<const fgnn::checkers::PositionRecord*> recs;
    recs.reserve(data.records.size());
    for (const auto& r : data.records) recs.push_back(&r);
    fgnn::EvalResult res = fgnn::evaluate(net, recs);
    std::cout << "positions " << res.count << " top1 " << res.top1 << " top3 " << res.top3
              << " loss " << res.mean_loss << "\n";
    return 0;
}

int cmd_make_spec(const std::string& kind, int filters, int depth, const std::string& group_name,
                  int levels, int side, const std::string& out) {
    fgnn::NetworkSpec spec;
    if (kind == "baseline") {
        spec = fgnn::build_baseline_cnn(filters, depth);
    } else if (kind == "fgnn") {
        spec = fgnn::build_fgnn_cnn(named_group(group_name.empty() ? "flip" : group_name), filters,
                                    depth);
    } else if (kind == "unet") {
        spec = fgnn::build_mini_unet(named_group(group_name.empty() ? "d8" : group_name), levels,
                                     filters, side);
    } else {
        throw fgnn::Error("unknown spec kind '" + kind + "' (baseline|fgnn|unet)");
    }
    std::ofstream os(out);
    os << spec.to_json().dump(2) << "\n";
    std::cout << "wrote spec '" << spec.name << "' to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-group equivariant networks: groups, checkers data, training"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "0 = OpenMP default, 1 = serial reference kernels");

    std::string group_file, spec_file, data_file, config_file, weights_file, out_path, runs_dir;
    std::string kind, group_name;
    int samples = 20, games = 200, depth = 10, filters = 8, levels = 2, side = 32;
    double tol = 1e-9;
    uint64_t seed = 1;
    bool no_forced = false;

    auto* vg = app.add_subcommand("verify-group", "check the group axioms of a group file");
    vg->add_option("file", group_file)->required();

    auto* ce = app.add_subcommand("check-equivariance", "certify N(gX) = g'N(X) at random init");
    ce->add_option("--spec", spec_file)->required();
    ce->add_option("--group", group_file);
    ce->add_option("--samples", samples);
    ce->add_option("--tol", tol);
    ce->add_option("--seed", seed);

    auto* gd = app.add_subcommand("gen-dataset", "random-playout checkers positions (JSONL)");
    gd->add_option("--seed", seed);
    gd->add_option("--games", games);
    gd->add_option("--out", out_path)->required();
    gd->add_flag("--no-forced-capture", no_forced);

    auto* tr = app.add_subcommand("train", "train a network spec on a dataset");
    tr->add_option("--spec", spec_file)->required();
    tr->add_option("--data", data_file)->required();
    tr->add_option("--config", config_file);
    tr->add_option("--out", out_path)->required();

    auto* ev = app.add_subcommand("eval", "top-1/top-3 accuracy of saved weights on a dataset");
    ev->add_option("--weights", weights_file)->required();
    ev->add_option("--spec", spec_file)->required();
    ev->add_option("--data", data_file)->required();

    auto* rp = app.add_subcommand("report", "aggregate run metrics into one CSV");
    rp->add_option("--runs", runs_dir)->required();
    rp->add_option("--out", out_path)->required();

    auto* ms = app.add_subcommand("make-spec", "emit a builder network spec as JSON");
    ms->add_option("--kind", kind)->required();
    ms->add_option("--filters", filters);
    ms->add_option("--depth", depth);
    ms->add_option("--group", group_name);
    ms->add_option("--levels", levels);
    ms->add_option("--side", side);
    ms->add_option("--out", out_path)->required();

    CLI11_PARSE(app, argc, argv);
    apply_threads(threads);

    try {
        if (vg->parsed()) return cmd_verify_group(group_file);
        if (ce->parsed()) return cmd_check_equivariance(spec_file, group_file, samples, tol, seed);
        if (gd->parsed()) return cmd_gen_dataset(seed, games, out_path, !no_forced);
        if (tr->parsed()) return cmd_train(spec_file, data_file, config_file, out_path);
        if (ev->parsed()) return cmd_eval(weights_file, spec_file, data_file);
        if (rp->parsed()) {
            fgnn::aggregate_metrics(runs_dir, out_path);
            std::cout << "wrote " << out_path << "\n";
            return 0;
        }
        if (ms->parsed()) return cmd_make_spec(kind, filters, depth, group_name, levels, side, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
