// lddrl: demo collection, dynamics/VAE pretraining, actor-critic training
// with distillation, evaluation, experiment matrices and plots.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "ldd/config.hpp"
#include "ldd/matrix.hpp"
#include "ldd/oracle_suite.hpp"
#include "ldd/plot.hpp"
#include "ldd/pretrain.hpp"

using namespace ldd;

namespace {

Config load_config(const std::string& path, const std::vector<std::string>& sets) {
    Config cfg = path.empty() ? Config::defaults() : Config::parse_file(path);
    int n = 0;
    for (const auto& s : sets) cfg.set_line(s, "--set", ++n);
    return cfg;
}

int cmd_gen_demos(const Config& cfg, const std::string& out, const std::string& ckpt_path) {
    EpisodeConfig ecfg = cfg.episode_config();
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    DemoPolicy policy = DemoPolicy::expert;
    std::string p = cfg.gets("demos.policy");
    if (p == "random") policy = DemoPolicy::random_policy;
    if (p == "checkpoint") policy = DemoPolicy::checkpoint;

    std::optional<Model> ckpt;
    if (policy == DemoPolicy::checkpoint) {
        if (ckpt_path.empty()) throw ConfigError("gen-demos: checkpoint policy requires --ckpt");
        ckpt = Model::from_checkpoint(load_checkpoint(ckpt_path));
    }
    DemoStore store = collect_demos(ecfg, split, Side::train, policy, ckpt ? &*ckpt : nullptr,
                                    static_cast<int>(cfg.geti("demos.n")),
                                    static_cast<uint64_t>(cfg.geti("demos.seed")),
                                    cfg.getb("demos.strip_actions"));
    save_demos(store, out);
    write_vocab_tsv(std::filesystem::path(out).parent_path() / "vocab.tsv");
    std::cout << "wrote " << store.trajs.size() << " trajectories (win rate "
              << format_double(store.header.win_rate) << ", labeled " << (store.header.labeled ? "yes" : "no")
              << ") to " << out << "\n";
    return 0;
}

int cmd_pretrain(const Config& cfg, const std::string& kind, const std::string& demos_path,
                 const std::string& out_model, const std::string& out_teacher, const std::string& out_report) {
    DemoStore store = load_demos(demos_path, std::nullopt, Vocab::instance().hash());
    ModelConfig mcfg = cfg.model_config();
    if (kind == "vae") {
        Model model = vae_pretrain(store, cfg.vae_config(), mcfg);
        save_checkpoint(model.to_checkpoint({{"kind", "vae_init"}}), out_model);
        std::cout << "wrote VAE-pretrained parameters to " << out_model << "\n";
        return 0;
    }
    PretrainResult res = pretrain_dynamics(store, cfg.pretrain_config(), mcfg);
    save_checkpoint(res.model.to_checkpoint({{"kind", "dynamics_init"}}), out_model);
    if (!out_teacher.empty()) res.teacher.save(out_teacher);
    if (!out_report.empty()) write_file_atomic(out_report, res.report.to_csv());
    std::cout << "dynamics pretraining: best held-out accuracy " << format_double(res.report.best_acc)
              << " at epoch " << res.report.best_epoch << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& out_dir, const std::string& teacher_path,
              const std::string& init_path) {
    EpisodeConfig ecfg = cfg.episode_config();
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    TrainConfig tcfg = cfg.train_config();

    std::optional<TeacherSnapshot> teacher;
    std::optional<Model> init;
    TrainArtifacts artifacts;
    if (!teacher_path.empty()) {
        teacher = TeacherSnapshot::load(teacher_path);
        artifacts.teacher = &*teacher;
    }
    if (!init_path.empty()) {
        init = Model::from_checkpoint(load_checkpoint(init_path));
        artifacts.init_params = &*init;
    }
    TrainResult res = train(tcfg, ecfg, split, cfg.model_config(), artifacts, out_dir);
    std::cout << "train " << to_string(tcfg.variant) << " seed " << tcfg.seed
              << ": final train win " << format_double(res.final_train_win)
              << ", eval win " << format_double(res.final_eval_win)
              << ", metrics " << res.metrics_path.string() << "\n";
    return 0;
}

int cmd_eval(const Config& cfg, const std::string& ckpt_path) {
    EpisodeConfig ecfg = cfg.episode_config();
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    Model model = Model::from_checkpoint(load_checkpoint(ckpt_path));
    Side side = cfg.gets("eval.split") == "train" ? Side::train : Side::eval;
    double wr = evaluate_win_rate(model, ecfg, split, side, static_cast<int>(cfg.geti("eval.episodes")),
                                  static_cast<uint64_t>(cfg.geti("eval.seed")));
    std::cout << "win_rate " << format_double(wr) << "\n";
    return 0;
}

int cmd_matrix(const Config& cfg, const std::string& out_dir, int jobs) {
    int j = jobs > 0 ? jobs : static_cast<int>(cfg.geti("matrix.jobs"));
    MatrixResult res = run_matrix(cfg, out_dir, j, std::cout);
    std::cout << "matrix: " << res.completed << " completed, " << res.skipped << " skipped, "
              << res.failed << " failed\n";
    return res.failed == 0 ? 0 : 3;
}

int cmd_plot(const Config& cfg, const std::vector<std::string>& csvs, const std::string& out,
             const std::string& column) {
    std::vector<std::filesystem::path> paths(csvs.begin(), csvs.end());
    std::string col = column.empty() ? cfg.gets("plot.column") : column;
    plot_metrics(paths, col, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_grad_check(int configs, uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<OracleCaseResult> results = run_gradient_oracle_suite(configs, seed);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << " max_rel_err "
                  << format_double(r.max_rel_err) << " over " << r.coords << " coords ("
                  << r.configs << " configs)\n";
        ok = ok && r.pass;
    }
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (ok ? "gradient oracle suite passed" : "gradient oracle suite FAILED")
              << " in " << format_double(dt) << "s\n";
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"language-grounded gridworld RL with dynamics-model pretraining and distillation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "config file (key=value lines)");
    app.add_option("--set", sets, "override config entries, e.g. --set rl.seed=3")->take_all();

    std::string out, ckpt, teacher, init, kind = "dynamics", column;
    std::vector<std::string> csvs;
    int jobs = 0;
    int gc_configs = 100;
    uint64_t gc_seed = 1;

    auto* gen = app.add_subcommand("gen-demos", "collect demonstration rollouts");
    gen->add_option("--out", out, "output store path")->required();
    gen->add_option("--ckpt", ckpt, "policy checkpoint (for demos.policy=checkpoint)");

    auto* pre = app.add_subcommand("pretrain", "pretrain on a demo store");
    pre->add_option("--kind", kind, "dynamics | vae")->check(CLI::IsMember({"dynamics", "vae"}));
    pre->add_option("--demos", ckpt, "demo store path")->required();
    pre->add_option("--out-model", out, "output model checkpoint")->required();
    pre->add_option("--out-teacher", teacher, "output teacher snapshot (dynamics only)");
    pre->add_option("--report", init, "output report CSV (dynamics only)");

    auto* tr = app.add_subcommand("train", "run the actor-critic learner");
    tr->add_option("--out", out, "output run directory")->required();
    tr->add_option("--teacher", teacher, "teacher snapshot (ldd*, reward_shaping)");
    tr->add_option("--init", init, "initialization checkpoint (vae, inverse)");

    auto* ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    ev->add_option("--ckpt", ckpt, "model checkpoint")->required();

    auto* mx = app.add_subcommand("matrix", "run the experiment matrix");
    mx->add_option("--out", out, "output root directory")->required();
    mx->add_option("--jobs", jobs, "worker count (default matrix.jobs)");

    auto* pl = app.add_subcommand("plot", "render learning curves from metrics CSVs");
    pl->add_option("--out", out, "output SVG path")->required();
    pl->add_option("--column", column, "metrics column to plot");
    pl->add_option("csvs", csvs, "metrics CSV files")->required();

    auto* gc = app.add_subcommand("grad-check", "run the gradient oracle suite");
    gc->add_option("--configs", gc_configs, "random configurations per case");
    gc->add_option("--seed", gc_seed, "oracle seed");

    auto* vc = app.add_subcommand("vocab", "write vocab.tsv");
    vc->add_option("--out", out, "output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1
    }

    try {
        Config cfg = load_config(config_path, sets);
        if (gen->parsed()) return cmd_gen_demos(cfg, out, ckpt);
        if (pre->parsed()) return cmd_pretrain(cfg, kind, ckpt, out, teacher, init);
        if (tr->parsed()) return cmd_train(cfg, out, teacher, init);
        if (ev->parsed()) return cmd_eval(cfg, ckpt);
        if (mx->parsed()) return cmd_matrix(cfg, out, jobs);
        if (pl->parsed()) return cmd_plot(cfg, csvs, out, column);
        if (gc->parsed()) return cmd_grad_check(gc_configs, gc_seed);
        if (vc->parsed()) {
            write_vocab_tsv(out);
            std::cout << "wrote " << out << "\n";
            return 0;
        }
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
