// Command-line entry points: dataset generation, training (single and
// distributed), evaluation with rollout, and the property-check suites.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "vegn/checks.hpp"
#include "vegn/common.hpp"
#include "vegn/dist.hpp"
#include "vegn/model.hpp"
#include "vegn/nbody.hpp"
#include "vegn/run_config.hpp"
#include "vegn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

vegn::RunConfig default_run_config() {
    vegn::RunConfig rc;
    rc.define("backbone", "fast_egnn");
    rc.define("layers", "4");
    rc.define("hidden", "64");
    rc.define("virtual_nodes", "3");
    rc.define("drop_rate", "0");
    rc.define("mmd_lambda", "0.03");
    rc.define("mmd_sigma", "1.5");
    rc.define("mmd_samples", "3");
    rc.define("global_virtual_message", "false");
    rc.define("epochs", "2500");
    rc.define("patience", "200");
    rc.define("batch", "16");
    rc.define("eval_period", "1");
    rc.define("lr", "5e-4");
    rc.define("weight_decay", "1e-12");
    rc.define("seed", "0");
    rc.define("devices", "1");
    rc.define("partition", "random");
    rc.define("radius_mode", "fixed");
    rc.define("radius", "inf");
    rc.define("transport", "inproc");
    return rc;
}

vegn::ModelConfig model_config_from(const vegn::RunConfig& rc, const vegn::Dataset& ds) {
    vegn::ModelConfig cfg;
    cfg.backbone = vegn::backbone_from_string(rc.get("backbone"));
    cfg.layers = rc.get_int("layers");
    cfg.hidden = rc.get_int("hidden");
    cfg.channels = rc.get_int("virtual_nodes");
    cfg.drop_rate = rc.get_double("drop_rate");
    cfg.mmd_lambda = rc.get_double("mmd_lambda");
    cfg.mmd_sigma = rc.get_double("mmd_sigma");
    cfg.mmd_samples = rc.get_int("mmd_samples");
    cfg.global_virtual_message = rc.get_bool("global_virtual_message");
    cfg.feature_dim = 2;
    cfg.edge_attr_dim = 1;
    (void)ds;
    cfg.validate();
    return cfg;
}

vegn::TrainConfig train_config_from(const vegn::RunConfig& rc) {
    vegn::TrainConfig tc;
    tc.epochs = rc.get_int("epochs");
    tc.patience = rc.get_int("patience");
    tc.batch = rc.get_int("batch");
    tc.eval_period = rc.get_int("eval_period");
    tc.seed = rc.get_u64("seed");
    tc.adam.lr = rc.get_double("lr");
    tc.adam.weight_decay = rc.get_double("weight_decay");
    tc.validate();
    return tc;
}

double parse_radius(const std::string& v) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    return std::stod(v);
}

// Shared flag surface for train / dist-train / eval; every flag mirrors one
// RunConfig key so precedence and provenance stay uniform.
void add_config_flags(CLI::App* app, std::map<std::string, std::string>& flag_values) {
    static const std::vector<std::pair<std::string, std::string>> flags = {
        {"--backbone", "backbone"},
        {"--layers", "layers"},
        {"--hidden", "hidden"},
        {"--virtual-nodes", "virtual_nodes"},
        {"--drop-rate", "drop_rate"},
        {"--mmd-lambda", "mmd_lambda"},
        {"--mmd-sigma", "mmd_sigma"},
        {"--mmd-samples", "mmd_samples"},
        {"--global-virtual-message", "global_virtual_message"},
        {"--epochs", "epochs"},
        {"--patience", "patience"},
        {"--batch", "batch"},
        {"--eval-period", "eval_period"},
        {"--lr", "lr"},
        {"--weight-decay", "weight_decay"},
        {"--seed", "seed"},
        {"--devices", "devices"},
        {"--partition", "partition"},
        {"--radius-mode", "radius_mode"},
        {"--radius", "radius"},
        {"--transport", "transport"},
    };
    for (const auto& [flag, key] : flags)
        app->add_option_function<std::string>(
            flag, [&flag_values, key = key](const std::string& v) { flag_values[key] = v; });
}

vegn::RunConfig resolve_config(const std::string& config_file,
                               const std::map<std::string, std::string>& flag_values) {
    vegn::RunConfig rc = default_run_config();
    for (const auto& [key, value] : flag_values) rc.set_cli(key, value);
    if (!config_file.empty()) rc.load_file(config_file);
    if (const char* env_seed = std::getenv("VEGN_SEED")) rc.set_env("seed", env_seed);
    return rc;
}

void write_metrics(const fs::path& path, const std::vector<vegn::EpochMetrics>& history) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    for (const auto& m : history) {
        json j{{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"seconds", m.seconds}};
        if (std::isfinite(m.val_mse)) j["val_mse"] = m.val_mse;
        f << j.dump() << "\n";
    }
}

int cmd_generate(const std::string& out, int n_train, int n_val, int n_test, int particles,
                 int delta, int t_input, double dt_sim, int substeps, double epsilon,
                 std::uint64_t seed, bool force) {
    if (fs::exists(out) && !force)
        throw std::runtime_error("output exists (use --force to overwrite): " + out);
    vegn::DatasetConfig cfg;
    cfg.n_train = n_train;
    cfg.n_val = n_val;
    cfg.n_test = n_test;
    cfg.particles = particles;
    cfg.delta_frames = delta;
    cfg.t_input = t_input;
    cfg.sim.dt_sim = dt_sim;
    cfg.sim.substeps = substeps;
    cfg.sim.epsilon = epsilon;
    cfg.seed = seed;
    vegn::Dataset ds = vegn::build_dataset(cfg);
    vegn::write_dataset(ds, out);
    std::cout << "wrote " << out << " (" << n_train << "/" << n_val << "/" << n_test
              << " samples, n = " << particles << ")\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& run_dir, const vegn::RunConfig& rc,
              bool distributed) {
    vegn::Dataset ds = vegn::read_dataset(data_path);
    vegn::ModelConfig cfg = model_config_from(rc, ds);
    vegn::TrainConfig tc = train_config_from(rc);

    fs::create_directories(run_dir);
    rc.write_resolved((fs::path(run_dir) / "config.resolved").string());

    vegn::TrainResult result;
    if (distributed) {
        vegn::DistTrainOptions opts;
        opts.devices = rc.get_int("devices");
        opts.partition = rc.get("partition");
        opts.radius_mode = rc.get("radius_mode");
        opts.radius = parse_radius(rc.get("radius"));
        opts.transport = rc.get("transport");
        result = vegn::train_distributed(ds.train, ds.val, cfg, tc, opts);
    } else {
        result = vegn::train(ds.train, ds.val, cfg, tc);
    }

    write_metrics(fs::path(run_dir) / "metrics.jsonl", result.history);
    result.best_params.save((fs::path(run_dir) / "checkpoint.bin").string());

    json report{{"best_epoch", result.best_epoch},
                {"best_val_mse", result.best_val},
                {"epochs_run", result.history.size()}};
    std::ofstream rf(fs::path(run_dir) / "report.json");
    rf << report.dump(2) << "\n";
    std::cout << "best val MSE " << result.best_val << " at epoch " << result.best_epoch << " ("
              << result.history.size() << " epochs)\n";
    return 0;
}

vegn::ModelParams load_run(const std::string& run_dir, vegn::ModelConfig& cfg_out) {
    vegn::RunConfig rc = default_run_config();
    rc.load_file((fs::path(run_dir) / "config.resolved").string());
    vegn::Dataset dummy;
    cfg_out = model_config_from(rc, dummy);
    vegn::ModelParams params = vegn::ModelParams::create(cfg_out, 0);
    params.store.load((fs::path(run_dir) / "checkpoint.bin").string());
    return params;
}

int cmd_eval(const std::string& run_dir, const std::string& data_path, const std::string& baseline,
             bool full_e3, std::uint64_t seed, int rollout_steps, const std::string& rollout_out,
             int rollout_sample, const std::string& report_path) {
    vegn::Dataset ds = vegn::read_dataset(data_path);
    vegn::ModelConfig cfg;
    vegn::ModelParams params = load_run(run_dir, cfg);

    vegn::EvalOptions opts;
    opts.seed = seed;
    opts.rotations = true;
    opts.translations = full_e3;
    opts.reflections = full_e3;
    vegn::EvalResult res = vegn::evaluate(ds.test, cfg, params, opts);

    json report{{"mse", res.mse}, {"seconds", res.seconds}, {"samples", res.samples}};
    if (!baseline.empty()) {
        vegn::ModelConfig bcfg;
        vegn::ModelParams bparams = load_run(baseline, bcfg);
        vegn::EvalResult bres = vegn::evaluate(ds.test, bcfg, bparams, opts);
        report["baseline_seconds"] = bres.seconds;
        report["baseline_mse"] = bres.mse;
        report["relative_time"] = res.seconds / bres.seconds;
    }
    if (rollout_steps > 0) {
        if (rollout_sample < 0 || rollout_sample >= static_cast<int>(ds.test.size()))
            throw std::runtime_error("rollout sample index out of range");
        const vegn::NbodySample& s = ds.test[rollout_sample];
        double step_time =
            ds.config.delta_frames * ds.config.sim.substeps * ds.config.sim.dt_sim;
        std::vector<vegn::Tensor> frames =
            vegn::rollout(s, cfg, params, rollout_steps, step_time);
        std::ofstream f(rollout_out);
        if (!f) throw std::runtime_error("cannot write " + rollout_out);
        f << rollout_steps << " " << frames[0].rows() << " 3\n";
        f << std::setprecision(17);
        for (const auto& fr : frames)
            for (int i = 0; i < fr.rows(); ++i)
                f << fr(i, 0) << " " << fr(i, 1) << " " << fr(i, 2) << "\n";
        report["rollout_steps"] = rollout_steps;
        report["rollout_file"] = rollout_out;
    }

    std::ofstream rf(report_path);
    if (!rf) throw std::runtime_error("cannot write " + report_path);
    rf << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_check(const std::string& suite, double tolerance, std::uint64_t seed,
              bool negative_control) {
    std::vector<vegn::SuiteResult> results;
    auto want = [&](const char* name) { return suite == "all" || suite == name; };

    if (want("equivariance")) {
        vegn::ModelConfig cfg;
        cfg.layers = 2;
        cfg.hidden = 16;
        cfg.channels = 2;
        cfg.drop_rate = 0.5;
        results.push_back(vegn::run_equivariance_suite(
            cfg, seed, 5, 20, 10, 16, tolerance > 0 ? tolerance : 1e-9, negative_control));
    }
    if (want("gradcheck")) {
        vegn::ModelConfig cfg;
        cfg.layers = 2;
        cfg.hidden = 8;
        cfg.channels = 2;
        results.push_back(vegn::run_gradcheck_suite(cfg, seed, 6,
                                                    tolerance > 0 ? tolerance : 1e-4,
                                                    negative_control));
    }
    if (want("dist-oracle")) {
        results.push_back(vegn::run_dist_oracle_suite(seed, tolerance > 0 ? tolerance : 1e-8,
                                                      1e-9, negative_control));
    }
    if (want("mmd")) {
        results.push_back(
            vegn::run_mmd_suite(seed, tolerance > 0 ? tolerance : 1e-12, negative_control));
    }
    if (results.empty()) throw std::runtime_error("unknown suite: " + suite);

    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (max deviation "
                  << std::scientific << std::setprecision(3) << r.max_deviation << ", tolerance "
                  << r.tolerance << ")\n";
        for (const auto& line : r.lines) std::cout << "    " << line << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual-node equivariant graph networks"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "simulate and write an n-body dataset");
    std::string gen_out = "nbody.vegn";
    int gen_train = 1000, gen_val = 200, gen_test = 200, gen_particles = 30;
    int gen_delta = 10, gen_tinput = 30, gen_substeps = 10;
    double gen_dt = 1e-3, gen_eps = 0.1;
    std::uint64_t gen_seed = 42;
    bool gen_force = false;
    gen->add_option("--out", gen_out);
    gen->add_option("--train", gen_train);
    gen->add_option("--val", gen_val);
    gen->add_option("--test", gen_test);
    gen->add_option("--n-particles", gen_particles);
    gen->add_option("--delta", gen_delta);
    gen->add_option("--t-input", gen_tinput);
    gen->add_option("--dt-sim", gen_dt);
    gen->add_option("--substeps", gen_substeps);
    gen->add_option("--epsilon", gen_eps);
    gen->add_option("--seed", gen_seed);
    gen->add_flag("--force", gen_force);

    // train / dist-train
    std::map<std::string, std::string> train_flags, dist_flags;
    std::string train_data, train_dir = "run", train_cfg_file;
    auto* tr = app.add_subcommand("train", "train a model on one device");
    tr->add_option("--data", train_data)->required();
    tr->add_option("--run-dir", train_dir);
    tr->add_option("--config", train_cfg_file);
    add_config_flags(tr, train_flags);

    std::string dist_data, dist_dir = "run", dist_cfg_file;
    auto* dt = app.add_subcommand("dist-train", "train with the distributed runtime");
    dt->add_option("--data", dist_data)->required();
    dt->add_option("--run-dir", dist_dir);
    dt->add_option("--config", dist_cfg_file);
    add_config_flags(dt, dist_flags);

    // eval
    auto* ev = app.add_subcommand("eval", "rotation-augmented evaluation of a checkpoint");
    std::string eval_run, eval_data, eval_baseline, eval_report = "report.json";
    std::string eval_rollout_out = "rollout.txt";
    bool eval_full_e3 = false;
    std::uint64_t eval_seed = 0;
    int eval_rollout = 0, eval_sample = 0;
    ev->add_option("--run-dir", eval_run)->required();
    ev->add_option("--data", eval_data)->required();
    ev->add_option("--baseline", eval_baseline);
    ev->add_option("--report", eval_report);
    ev->add_flag("--full-e3", eval_full_e3);
    ev->add_option("--seed", eval_seed);
    ev->add_option("--rollout", eval_rollout);
    ev->add_option("--rollout-out", eval_rollout_out);
    ev->add_option("--sample", eval_sample);

    // check
    auto* ck = app.add_subcommand("check", "run the property suites");
    std::string check_suite = "all";
    double check_tol = 0.0;
    std::uint64_t check_seed = 7;
    bool check_negative = false;
    ck->add_option("--suite", check_suite);
    ck->add_option("--tolerance", check_tol);
    ck->add_option("--seed", check_seed);
    ck->add_flag("--negative-control", check_negative);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate(gen_out, gen_train, gen_val, gen_test, gen_particles, gen_delta,
                                gen_tinput, gen_dt, gen_substeps, gen_eps, gen_seed, gen_force);
        if (tr->parsed())
            return cmd_train(train_data, train_dir, resolve_config(train_cfg_file, train_flags),
                             false);
        if (dt->parsed())
            return cmd_train(dist_data, dist_dir, resolve_config(dist_cfg_file, dist_flags), true);
        if (ev->parsed())
            return cmd_eval(eval_run, eval_data, eval_baseline, eval_full_e3, eval_seed,
                            eval_rollout, eval_rollout_out, eval_sample, eval_report);
        if (ck->parsed()) return cmd_check(check_suite, check_tol, check_seed, check_negative);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
