#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ldd/matrix.hpp"
#include "ldd/plot.hpp"

using namespace ldd;

namespace {

std::filesystem::path test_dir(const char* name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// small budgets for matrix runs
Config tiny_matrix_config() {
    Config cfg = Config::defaults();
    cfg.set("demos.n", "20");
    cfg.set("pretrain.epochs", "1");
    cfg.set("pretrain.patience", "1");
    cfg.set("pretrain.epoch_cap", "400");
    cfg.set("model.d_tok", "12");
    cfg.set("model.d_sym", "4");
    cfg.set("model.d_key", "4");
    cfg.set("model.d_val", "4");
    cfg.set("model.hidden", "12");
    cfg.set("model.repr", "64");
    cfg.set("rl.total_frames", "600");
    cfg.set("rl.n_actors", "2");
    cfg.set("rl.unroll", "8");
    cfg.set("rl.eval_cadence", "300");
    cfg.set("rl.eval_episodes", "3");
    cfg.set("rl.checkpoint_cadence", "0");
    return cfg;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(LDDRL_BIN) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
    Config cfg = Config::parse_string("");
    CHECK(cfg.getd("env.gamma") == 0.99);
    CHECK(cfg.getd("rl.alpha_v") == 0.5);
    CHECK(cfg.getd("rl.entropy_cost") == 0.05);
    CHECK(cfg.getd("rl.lr") == 1e-4);
    CHECK(cfg.gets("rl.optimizer") == "adam");
    CHECK(cfg.getd("rl.beta1") == 0.99);
    CHECK(cfg.getd("rl.beta2") == 0.999);
    CHECK(cfg.getd("rl.eps") == 1e-6);
    CHECK(cfg.getd("rl.alpha_d") == 1.0);
    CHECK(cfg.geti("rl.unroll") == 16);
    CHECK(cfg.geti("rl.n_actors") == 4);
    CHECK(cfg.geti("demos.n") == 1000);
}

TEST_CASE("type errors carry the offending line number") {
    try {
        Config::parse_string("rl.alpha_d=1.0\n\nrl.unroll=abc\n", "test.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("test.cfg:3") != std::string::npos);
        CHECK(msg.find("abc") != std::string::npos);
    }
    try {
        Config::parse_string("rl.alpha_d=abc\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
}

TEST_CASE("unknown keys are rejected by name") {
    try {
        Config::parse_string("rl.alpha_q=1\n", "x.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("rl.alpha_q") != std::string::npos);
        CHECK(msg.find("x.cfg:1") != std::string::npos);
    }
}

TEST_CASE("bad enum values list the alternatives") {
    try {
        Config::parse_string("rl.variant=sorcery\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("scratch") != std::string::npos);
    }
}

TEST_CASE("serialize/parse round trip preserves the tree") {
    Config cfg = Config::parse_string("rl.alpha_d=0.25\nenv.grid=6\nenv.max_steps=48\nrl.variant=ldd\n");
    std::string text = cfg.serialize();
    Config back = Config::parse_string(text);
    CHECK(back == cfg);
    CHECK(back.hash() == cfg.hash());
    // comments and blank lines are tolerated
    Config with_comments = Config::parse_string("# comment\n\n  rl.alpha_d = 0.25  \nenv.grid=6\nenv.max_steps=48\nrl.variant=ldd\n");
    CHECK(with_comments == cfg);
}

TEST_CASE("typed views validate their fields") {
    Config cfg = Config::parse_string("env.gamma=1.5\n");
    CHECK_THROWS_AS(cfg.episode_config(), ConfigError);
    Config cfg2 = Config::parse_string("rl.alpha_d=-1\n");
    CHECK_THROWS_AS(cfg2.train_config(), ConfigError);
}

TEST_CASE("matrix expansion: variants x seeds") {
    Config cfg = Config::defaults();
    cfg.set("matrix.variants", "ldd,scratch");
    cfg.set("matrix.seeds", "1,2,3");
    std::vector<MatrixCell> cells = expand_matrix(cfg);
    REQUIRE(cells.size() == 6);
    CHECK(cells[0].name() == "ldd_msg-on_expert_s1");
    CHECK(cells[5].name() == "scratch_msg-on_expert_s3");
}

TEST_CASE("matrix runs produce manifests and metrics; resume skips completed cells") {
    Config cfg = tiny_matrix_config();
    cfg.set("matrix.variants", "ldd,scratch");
    cfg.set("matrix.seeds", "1,2,3");
    auto out = test_dir("ldd_matrix_test");

    std::ostringstream log;
    MatrixResult r1 = run_matrix(cfg, out, 2, log);
    CHECK(r1.completed == 6);
    CHECK(r1.failed == 0);

    std::vector<MatrixCell> cells = expand_matrix(cfg);
    std::vector<std::filesystem::file_time_type> stamps;
    for (const auto& cell : cells) {
        auto manifest_path = out / cell.name() / "manifest.json";
        auto metrics_path = out / cell.name() / "metrics.csv";
        REQUIRE(std::filesystem::exists(manifest_path));
        REQUIRE(std::filesystem::exists(metrics_path));
        auto m = RunManifest::load(manifest_path);
        REQUIRE(m.has_value());
        CHECK(m->status == "completed");
        CHECK(m->config_hash != 0);
        CHECK(m->wall_clock_sec > 0.0);
        stamps.push_back(std::filesystem::last_write_time(metrics_path));
    }

    MatrixResult r2 = run_matrix(cfg, out, 1, log);
    CHECK(r2.completed == 0);
    CHECK(r2.skipped == 6);
    for (size_t i = 0; i < cells.size(); ++i)
        CHECK(std::filesystem::last_write_time(out / cells[i].name() / "metrics.csv") == stamps[i]);

    std::filesystem::remove_all(out);
}

TEST_CASE("manifest json round trip") {
    RunManifest m;
    m.run_id = "ldd_s1";
    m.config_hash = 0x12345678abcdefull;
    m.source_rev = "deadbeef";
    m.artifacts = {"a.csv", "b.bin"};
    m.wall_clock_sec = 12.5;
    m.status = "completed";
    RunManifest back = RunManifest::from_json(m.to_json());
    CHECK(back.run_id == m.run_id);
    CHECK(back.config_hash == m.config_hash);
    CHECK(back.source_rev == m.source_rev);
    CHECK(back.artifacts == m.artifacts);
    CHECK(back.wall_clock_sec == m.wall_clock_sec);
    CHECK(back.status == m.status);
}

TEST_CASE("plot renders one mean curve and one band per variant") {
    auto dir = test_dir("ldd_plot_test");
    auto write_csv = [&](const char* name, const char* variant, int seed, double base) {
        std::ostringstream os;
        os << metrics_csv_header() << "\n";
        for (int i = 1; i <= 5; ++i)
            os << i * 1000 << ",10," << variant << "," << seed << "," << format_double(base + 0.1 * i) << ",0.5,0.1,0,0,1.6,0,0\n";
        write_file_atomic(dir / name, os.str());
    };
    write_csv("a1.csv", "ldd", 1, 0.2);
    write_csv("a2.csv", "ldd", 2, 0.3);
    write_csv("b1.csv", "scratch", 1, 0.1);

    plot_metrics({dir / "a1.csv", dir / "a2.csv", dir / "b1.csv"}, "train_win_rate", dir / "out.svg");
    std::string svg = slurp(dir / "out.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    size_t means = 0, bands = 0, pos = 0;
    while ((pos = svg.find("class=\"mean\"", pos)) != std::string::npos) {
        ++means;
        pos += 10;
    }
    pos = 0;
    while ((pos = svg.find("class=\"band\"", pos)) != std::string::npos) {
        ++bands;
        pos += 10;
    }
    CHECK(means == 2);
    CHECK(bands == 2);
    CHECK(svg.find("ldd (2 runs)") != std::string::npos);
    CHECK(svg.find("scratch (1 run)") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("metrics series reader extracts the requested column") {
    auto dir = test_dir("ldd_series_test");
    std::ostringstream os;
    os << metrics_csv_header() << "\n";
    os << "1000,5,ldd,3,0.25,0.5,0.1,0,0,1.6,0.01,0\n";
    write_file_atomic(dir / "m.csv", os.str());
    RunSeries s = read_metrics_series(dir / "m.csv", "eval_win_rate");
    CHECK(s.variant == "ldd");
    CHECK(s.seed == 3);
    REQUIRE(s.y.size() == 1);
    CHECK(s.y[0] == 0.5);
    CHECK_THROWS_AS(read_metrics_series(dir / "m.csv", "nonexistent"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("CLI exit codes: 0 ok, 1 usage, 2 validation") {
    CHECK(run_cli("grad-check --configs 2") == 0);
    CHECK(run_cli("definitely-not-a-subcommand") == 1);
    CHECK(run_cli("gen-demos") == 1);  // missing required --out

    auto dir = test_dir("ldd_cli_test");
    std::ofstream bad(dir / "bad.cfg");
    bad << "rl.unroll=oops\n";
    bad.close();
    CHECK(run_cli("--config " + (dir / "bad.cfg").string() + " gen-demos --out " + (dir / "d.bin").string()) == 2);

    // vocab subcommand writes the table
    CHECK(run_cli("vocab --out " + (dir / "vocab.tsv").string()) == 0);
    CHECK(read_vocab_tsv_hash(dir / "vocab.tsv") == Vocab::instance().hash());
    std::filesystem::remove_all(dir);
}

TEST_CASE("CLI gen-demos + eval round trip") {
    auto dir = test_dir("ldd_cli_flow");
    std::string set_small = "--set demos.n=10 --set demos.seed=4";
    CHECK(run_cli(set_small + " gen-demos --out " + (dir / "demos.bin").string()) == 0);
    DemoStore store = load_demos(dir / "demos.bin");
    CHECK(store.header.count == 10);
    CHECK(std::filesystem::exists(dir / "vocab.tsv"));
    std::filesystem::remove_all(dir);
}
