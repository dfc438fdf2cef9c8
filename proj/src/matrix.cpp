#include "ldd/matrix.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "ldd/pretrain.hpp"

namespace ldd {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find(',', pos);
        std::string item = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!item.empty()) out.push_back(item);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

std::mutex g_log_mutex;

void logline(std::ostream& log, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    log << msg << "\n" << std::flush;
}

}  // namespace

std::string MatrixCell::name() const {
    return to_string(variant) + "_" + (message_on ? "msg-on" : "msg-off") + "_" +
           to_string(demo_source) + "_s" + std::to_string(seed);
}

std::vector<MatrixCell> expand_matrix(const Config& cfg) {
    std::vector<MatrixCell> cells;
    std::vector<std::string> variants = split_list(cfg.gets("matrix.variants"));
    std::vector<std::string> seeds = split_list(cfg.gets("matrix.seeds"));
    if (variants.empty() || seeds.empty())
        throw ConfigError("matrix: variants and seeds must be non-empty");
    bool msg_on = cfg.gets("matrix.message") == "on";
    DemoPolicy source = cfg.gets("matrix.demo_source") == "expert" ? DemoPolicy::expert : DemoPolicy::random_policy;
    for (const auto& v : variants) {
        Variant variant = variant_from_string(v);
        for (const auto& s : seeds) {
            MatrixCell cell;
            cell.variant = variant;
            cell.message_on = msg_on;
            cell.demo_source = source;
            cell.seed = static_cast<uint64_t>(std::stoull(s));
            cells.push_back(cell);
        }
    }
    return cells;
}

namespace {

// Shared-artifact builders. File existence is the "built" signal; writes are
// atomic so concurrent workers safely race to build the same artifact.
std::mutex g_artifact_mutex;

std::filesystem::path ensure_demos(const Config& cfg, const MatrixCell& cell, DemoPolicy policy,
                                   bool strip_actions, const std::filesystem::path& shared,
                                   std::ostream& log) {
    std::ostringstream name;
    name << "demos_" << to_string(policy) << "_" << (cell.message_on ? "msg-on" : "msg-off")
         << (strip_actions ? "" : "_labeled") << "_s" << cell.seed << ".bin";
    std::filesystem::path path = shared / name.str();
    std::lock_guard<std::mutex> lock(g_artifact_mutex);
    if (std::filesystem::exists(path)) return path;

    EpisodeConfig ecfg = cfg.episode_config();
    ecfg.message_on = cell.message_on;
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    int n = static_cast<int>(cfg.geti("demos.n"));
    uint64_t seed = mix_seed(static_cast<uint64_t>(cfg.geti("demos.seed")), cell.seed);
    logline(log, "[matrix] collecting " + std::to_string(n) + " " + to_string(policy) + " demos -> " + path.string());
    DemoStore store = collect_demos(ecfg, split, Side::train, policy, nullptr, n, seed, strip_actions);
    save_demos(store, path);
    return path;
}

std::filesystem::path ensure_teacher(const Config& cfg, const MatrixCell& cell,
                                     const std::filesystem::path& shared, std::ostream& log) {
    std::ostringstream name;
    name << "teacher_" << to_string(cell.demo_source) << "_" << (cell.message_on ? "msg-on" : "msg-off")
         << "_s" << cell.seed << ".bin";
    std::filesystem::path path = shared / name.str();
    {
        std::lock_guard<std::mutex> lock(g_artifact_mutex);
        if (std::filesystem::exists(path)) return path;
    }
    std::filesystem::path demos_path = ensure_demos(cfg, cell, cell.demo_source, true, shared, log);

    std::lock_guard<std::mutex> lock(g_artifact_mutex);
    if (std::filesystem::exists(path)) return path;
    DemoStore store = load_demos(demos_path);
    PretrainConfig pcfg = cfg.pretrain_config();
    pcfg.seed = mix_seed(pcfg.seed, cell.seed);
    ModelConfig mcfg = cfg.model_config();
    logline(log, "[matrix] pretraining dynamics teacher -> " + path.string());
    PretrainResult res = pretrain_dynamics(store, pcfg, mcfg);
    res.teacher.save(path);
    write_file_atomic(path.string() + ".report.csv", res.report.to_csv());
    return path;
}

std::filesystem::path ensure_vae_init(const Config& cfg, const MatrixCell& cell,
                                      const std::filesystem::path& shared, std::ostream& log) {
    std::ostringstream name;
    name << "vae_" << to_string(cell.demo_source) << "_" << (cell.message_on ? "msg-on" : "msg-off")
         << "_s" << cell.seed << ".bin";
    std::filesystem::path path = shared / name.str();
    {
        std::lock_guard<std::mutex> lock(g_artifact_mutex);
        if (std::filesystem::exists(path)) return path;
    }
    std::filesystem::path demos_path = ensure_demos(cfg, cell, cell.demo_source, true, shared, log);

    std::lock_guard<std::mutex> lock(g_artifact_mutex);
    if (std::filesystem::exists(path)) return path;
    DemoStore store = load_demos(demos_path);
    VaeConfig vcfg = cfg.vae_config();
    vcfg.seed = mix_seed(vcfg.seed, cell.seed);
    logline(log, "[matrix] pretraining VAE init -> " + path.string());
    Model model = vae_pretrain(store, vcfg, cfg.model_config());
    save_checkpoint(model.to_checkpoint({{"kind", "vae_init"}}), path);
    return path;
}

std::filesystem::path ensure_bc_init(const Config& cfg, const MatrixCell& cell,
                                     const std::filesystem::path& out_root, std::ostream& log) {
    std::filesystem::path shared = out_root / "shared";
    std::ostringstream name;
    name << "bc_" << (cell.message_on ? "msg-on" : "msg-off") << "_s" << cell.seed << ".bin";
    std::filesystem::path path = shared / name.str();
    {
        std::lock_guard<std::mutex> lock(g_artifact_mutex);
        if (std::filesystem::exists(path)) return path;
    }

    // inverse pipeline: short scratch run, labeled rollouts from it, inverse
    // model, pseudo-labels on the unlabeled demos, behavior cloning
    std::filesystem::path demos_path = ensure_demos(cfg, cell, cell.demo_source, true, shared, log);

    std::lock_guard<std::mutex> lock(g_artifact_mutex);
    if (std::filesystem::exists(path)) return path;

    EpisodeConfig ecfg = cfg.episode_config();
    ecfg.message_on = cell.message_on;
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    ModelConfig mcfg = cfg.model_config();

    TrainConfig scratch_cfg = cfg.train_config();
    scratch_cfg.variant = Variant::scratch;
    scratch_cfg.seed = mix_seed(cell.seed, 0x111);
    scratch_cfg.total_frames = cfg.geti("inverse.pretrain_frames");
    scratch_cfg.eval_cadence = std::max<int64_t>(scratch_cfg.total_frames / 2, 1);
    scratch_cfg.checkpoint_cadence = 0;
    logline(log, "[matrix] inverse pipeline: scratch pretrain (" + std::to_string(scratch_cfg.total_frames) + " frames)");
    TrainResult scratch = train(scratch_cfg, ecfg, split, mcfg, {}, out_root / ("inverse_scratch_s" + std::to_string(cell.seed)));
    Model rollout_policy = Model::from_checkpoint(load_checkpoint(scratch.checkpoint_path));

    int rollouts = static_cast<int>(cfg.geti("inverse.rollouts"));
    logline(log, "[matrix] inverse pipeline: collecting " + std::to_string(rollouts) + " labeled rollouts");
    DemoStore rollout_store = collect_demos(ecfg, split, Side::train, DemoPolicy::checkpoint, &rollout_policy,
                                            rollouts, mix_seed(cell.seed, 0x222), false);

    InverseConfig icfg = cfg.inverse_config();
    icfg.seed = mix_seed(icfg.seed, cell.seed);
    logline(log, "[matrix] inverse pipeline: training inverse model");
    InverseResult inv = train_inverse_model(rollout_store, icfg, mcfg);
    logline(log, "[matrix] inverse model held-out accuracy: " + format_double(inv.heldout_accuracy));

    DemoStore unlabeled = load_demos(demos_path);
    DemoStore pseudo = pseudo_label(unlabeled, inv.model);

    BcConfig bcfg = cfg.bc_config();
    bcfg.seed = mix_seed(bcfg.seed, cell.seed);
    logline(log, "[matrix] inverse pipeline: behavior cloning");
    Model bc = behavior_clone(pseudo, bcfg, mcfg);
    save_checkpoint(bc.to_checkpoint({{"kind", "bc_init"}, {"inverse_acc", format_double(inv.heldout_accuracy)}}), path);
    return path;
}

}  // namespace

TrainResult run_matrix_cell(const Config& base_cfg, const MatrixCell& cell,
                            const std::filesystem::path& out_root, std::ostream& log) {
    std::filesystem::path shared = out_root / "shared";
    std::filesystem::create_directories(shared);

    Config cfg = base_cfg;
    cfg.set("rl.variant", to_string(cell.variant));
    cfg.set("rl.seed", std::to_string(cell.seed));
    cfg.set("env.message", cell.message_on ? "true" : "false");

    EpisodeConfig ecfg = cfg.episode_config();
    SplitSpec split = generate_split(ecfg.n_classes, ecfg.holdout_fraction, ecfg.split_seed);
    ModelConfig mcfg = cfg.model_config();
    TrainConfig tcfg = cfg.train_config();

    TrainArtifacts artifacts;
    std::optional<TeacherSnapshot> teacher;
    std::optional<Model> init;

    bool needs_teacher = cell.variant == Variant::ldd || cell.variant == Variant::ldd_minus_init ||
                         cell.variant == Variant::ldd_minus_distill || cell.variant == Variant::reward_shaping;
    if (needs_teacher) {
        teacher = TeacherSnapshot::load(ensure_teacher(cfg, cell, shared, log));
        artifacts.teacher = &*teacher;
    }
    if (cell.variant == Variant::vae) {
        init = Model::from_checkpoint(load_checkpoint(ensure_vae_init(cfg, cell, shared, log)));
        artifacts.init_params = &*init;
    }
    if (cell.variant == Variant::inverse) {
        init = Model::from_checkpoint(load_checkpoint(ensure_bc_init(cfg, cell, out_root, log)));
        artifacts.init_params = &*init;
    }

    auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train(tcfg, ecfg, split, mcfg, artifacts, out_root / cell.name());
    auto t1 = std::chrono::steady_clock::now();

    RunManifest m;
    m.run_id = cell.name();
    m.config_hash = cfg.hash();
    m.source_rev = source_revision();
    m.artifacts = {res.metrics_path.string(), res.checkpoint_path.string()};
    m.wall_clock_sec = std::chrono::duration<double>(t1 - t0).count();
    m.status = "completed";
    m.save(out_root / cell.name() / "manifest.json");
    return res;
}

MatrixResult run_matrix(const Config& cfg, const std::filesystem::path& out_root, int jobs, std::ostream& log) {
    std::vector<MatrixCell> cells = expand_matrix(cfg);
    std::filesystem::create_directories(out_root);

    MatrixResult result;
    std::mutex result_mutex;
    std::atomic<size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const MatrixCell& cell = cells[i];
            auto existing = RunManifest::load(out_root / cell.name() / "manifest.json");
            if (existing && existing->status == "completed") {
                logline(log, "[matrix] skip completed cell " + cell.name());
                std::lock_guard<std::mutex> lock(result_mutex);
                ++result.skipped;
                continue;
            }
            logline(log, "[matrix] run " + cell.name());
            try {
                run_matrix_cell(cfg, cell, out_root, log);
                std::lock_guard<std::mutex> lock(result_mutex);
                ++result.completed;
            } catch (const std::exception& e) {
                logline(log, "[matrix] cell " + cell.name() + " failed: " + e.what());
                RunManifest m;
                m.run_id = cell.name();
                m.config_hash = cfg.hash();
                m.source_rev = source_revision();
                m.status = "failed";
                std::filesystem::create_directories(out_root / cell.name());
                m.save(out_root / cell.name() / "manifest.json");
                std::lock_guard<std::mutex> lock(result_mutex);
                ++result.failed;
            }
        }
    };

    int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return result;
}

}  // namespace ldd
