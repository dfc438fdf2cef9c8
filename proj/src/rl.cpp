#include "ldd/rl.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace ldd {

Variant variant_from_string(const std::string& s) {
    if (s == "scratch") return Variant::scratch;
    if (s == "vae") return Variant::vae;
    if (s == "ldd") return Variant::ldd;
    if (s == "ldd_minus_init") return Variant::ldd_minus_init;
    if (s == "ldd_minus_distill") return Variant::ldd_minus_distill;
    if (s == "reward_shaping") return Variant::reward_shaping;
    if (s == "inverse") return Variant::inverse;
    throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::scratch: return "scratch";
        case Variant::vae: return "vae";
        case Variant::ldd: return "ldd";
        case Variant::ldd_minus_init: return "ldd_minus_init";
        case Variant::ldd_minus_distill: return "ldd_minus_distill";
        case Variant::reward_shaping: return "reward_shaping";
        case Variant::inverse: return "inverse";
    }
    return "?";
}

void LossWeights::validate() const {
    if (alpha_v < 0 || alpha_d < 0 || entropy < 0)
        throw ConfigError("loss weights must be >= 0");
}

void TrainConfig::validate() const {
    weights.validate();
    if (total_frames < 1) throw ConfigError("rl.total_frames must be >= 1");
    if (n_actors < 1) throw ConfigError("rl.n_actors must be >= 1");
    if (unroll < 1) throw ConfigError("rl.unroll must be >= 1");
    if (eval_cadence < 1) throw ConfigError("rl.eval_cadence must be >= 1");
    if (eval_episodes < 1) throw ConfigError("rl.eval_episodes must be >= 1");
    if (shaping_lambda < 0) throw ConfigError("rl.shaping_lambda must be >= 0");
    if (alpha_d_anneal != "none" && alpha_d_anneal != "linear")
        throw ConfigError("rl.alpha_d_anneal must be none or linear");
}

std::vector<double> compute_returns(const std::vector<double>& rewards,
                                    const std::vector<uint8_t>& dones,
                                    double gamma, double bootstrap_value) {
    if (rewards.size() != dones.size())
        throw ShapeError("compute_returns: rewards/dones length mismatch");
    std::vector<double> g(rewards.size());
    double acc = bootstrap_value;
    for (size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * (dones[i] ? 0.0 : acc);
        g[i] = acc;
    }
    return g;
}

namespace {

struct AssembledLoss {
    Var total;
    double j_pi, j_v, entropy, j_d;
    bool has_jd = false;
};

// Shared loss assembly over per-step tape nodes. The advantage (G - V) is
// read numerically, so no gradient flows through it into the policy term.
AssembledLoss assemble_loss(Tape& tape,
                            const std::vector<Var>& step_logits,
                            const std::vector<Var>& step_values,
                            const std::vector<int>& actions,
                            const std::vector<double>& returns,
                            const LossWeights& w,
                            const std::vector<Var>* student_reps,
                            const std::vector<Tensor>* teacher_reps,
                            const std::string& distill_norm,
                            double alpha_d_now,
                            const std::vector<double>* frozen_advantages) {
    size_t n = step_logits.size();
    if (n == 0 || step_values.size() != n || actions.size() != n || returns.size() != n)
        throw ShapeError("loss assembly: inconsistent batch");
    if (frozen_advantages && frozen_advantages->size() != n)
        throw ShapeError("loss assembly: frozen advantage length mismatch");

    Var logits_mat = tape.stack_rows(step_logits);  // [B x A]
    Var nll = tape.cross_entropy(logits_mat, actions);  // [B], = -log pi(a_t|s_t)
    Var logpi = tape.scale(nll, -1.0);

    std::vector<Var> value_flat;
    value_flat.reserve(n);
    for (Var v : step_values) value_flat.push_back(v);
    Var values = tape.concat(value_flat);  // [B]

    Tensor g_const({static_cast<int>(n)});
    Tensor adv_const({static_cast<int>(n)});
    for (size_t i = 0; i < n; ++i) {
        g_const[static_cast<int64_t>(i)] = returns[i];
        adv_const[static_cast<int64_t>(i)] =
            frozen_advantages ? (*frozen_advantages)[i] : returns[i] - tape.val(step_values[i])[0];
    }

    Var j_pi = tape.mean_all(tape.mul(logpi, tape.constant(std::move(adv_const))));
    Var diff = tape.sub(tape.constant(std::move(g_const)), values);
    Var j_v = tape.scale(tape.mean_all(tape.mul(diff, diff)), 0.5);
    Var h = tape.mean_all(tape.entropy(logits_mat));

    Var total = tape.add(tape.add(tape.scale(j_pi, -1.0), tape.scale(j_v, w.alpha_v)),
                         tape.scale(h, -w.entropy));

    AssembledLoss out{total, tape.val(j_pi)[0], tape.val(j_v)[0], tape.val(h)[0], 0.0};
    if (student_reps != nullptr) {
        Var j_d = distill_loss_from_reps(tape, *student_reps, *teacher_reps, distill_norm);
        out.total = tape.add(total, tape.scale(j_d, alpha_d_now));
        out.j_d = tape.val(j_d)[0];
        out.has_jd = true;
    }
    return out;
}

LossBreakdown run_batch_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                             const RolloutBatch& batch, const TeacherSnapshot* teacher,
                             const LossWeights& w, const std::string& distill_norm,
                             bool with_distill) {
    size_t n = batch.windows.size();
    if (batch.actions.size() != n || batch.rewards.size() != n || batch.dones.size() != n)
        throw ShapeError("rollout batch: inconsistent lengths");
    for (int a : batch.actions)
        if (a < 0 || a >= model.config().n_actions)
            throw ContractError("rollout batch: action " + std::to_string(a) + " outside support");

    std::vector<Var> reps, logits, values;
    reps.reserve(n);
    logits.reserve(n);
    values.reserve(n);
    for (const auto& win : batch.windows) {
        Var rep = model.encode(tape, bound, win);
        reps.push_back(rep);
        logits.push_back(model.policy_logits(tape, bound, rep));
        values.push_back(tape.flatten(model.value_out(tape, bound, rep)));
    }
    std::vector<double> returns = compute_returns(batch.rewards, batch.dones, batch.gamma, batch.bootstrap_value);

    std::vector<Tensor> teacher_reps;
    if (with_distill) {
        if (!teacher) throw ConfigError("joint loss: distillation requested without a teacher");
        if (teacher->model().config().repr != model.config().repr)
            throw ShapeError("joint loss: teacher/student representation width mismatch");
        teacher_reps.reserve(n);
        for (const auto& win : batch.windows) teacher_reps.push_back(teacher->model().encode_value(win));
    }

    AssembledLoss parts = assemble_loss(tape, logits, values, batch.actions, returns, w,
                                        with_distill ? &reps : nullptr,
                                        with_distill ? &teacher_reps : nullptr,
                                        distill_norm, w.alpha_d,
                                        batch.frozen_advantages ? &*batch.frozen_advantages : nullptr);
    LossBreakdown out;
    out.total = parts.total;
    out.j_pi = parts.j_pi;
    out.j_v = parts.j_v;
    out.entropy = parts.entropy;
    out.j_d = parts.j_d;
    out.total_value = tape.val(parts.total)[0];
    return out;
}

}  // namespace

LossBreakdown actor_critic_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                                const RolloutBatch& batch, const LossWeights& w) {
    return run_batch_loss(tape, model, bound, batch, nullptr, w, "mean_sq", false);
}

LossBreakdown joint_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                         const RolloutBatch& batch, const TeacherSnapshot* teacher,
                         const LossWeights& w, const std::string& distill_norm) {
    bool with_distill = teacher != nullptr && w.alpha_d > 0.0;
    return run_batch_loss(tape, model, bound, batch, teacher, w, distill_norm, with_distill);
}

double reward_shaping_penalty(const TeacherSnapshot& teacher, const Model::ObsWindow& before,
                              const Observation& after, double lambda) {
    std::vector<uint8_t> pred = teacher.model().predict_next_grid(before);
    const auto& truth = after.grid;
    if (pred.size() != truth.size())
        throw ShapeError("reward_shaping_penalty: grid size mismatch");
    int64_t correct = 0;
    for (size_t i = 0; i < truth.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
    double acc = static_cast<double>(correct) / static_cast<double>(truth.size());
    return -lambda * (1.0 - acc);
}

double evaluate_win_rate(const Model& model, const EpisodeConfig& ecfg, const SplitSpec& split,
                         Side side, int episodes, uint64_t seed_base) {
    Env env(ecfg, split, side);
    int fs = model.config().frame_stack;
    int wins = 0;
    for (int e = 0; e < episodes; ++e) {
        std::deque<Observation> history;
        history.push_back(env.reset(mix_seed(seed_base, side == Side::train ? 0x7e : 0xe7, static_cast<uint64_t>(e))));
        bool win = false;
        while (!env.done()) {
            Model::ObsWindow window;
            for (const auto& o : history) window.push_back(&o);
            int a = argmax_action(model.policy_probs(window));
            StepResult res = env.step(a);
            win = res.win;
            history.push_back(std::move(res.obs));
            while (static_cast<int>(history.size()) > fs) history.pop_front();
        }
        wins += win ? 1 : 0;
    }
    return static_cast<double>(wins) / static_cast<double>(episodes);
}

const char* metrics_csv_header() {
    return "frames,episodes,variant,seed,train_win_rate,eval_win_rate,mean_return,J_pi,J_V,entropy,J_d,shaped_penalty_mean";
}

namespace {

struct ActorState {
    Env env;
    std::deque<Observation> history;
    int64_t episode_counter = 0;
    double episode_return = 0.0;  // raw environment return, never shaped

    ActorState(const EpisodeConfig& cfg, const SplitSpec& split, Side side) : env(cfg, split, side) {}
};

struct StepRecord {
    Var rep, logits, value;
    int actor;
    int action;
    double reward;  // shaped reward when shaping is active
    uint8_t done;
    Tensor teacher_rep;  // populated when distilling
};

}  // namespace

TrainResult train(const TrainConfig& tcfg, const EpisodeConfig& ecfg, const SplitSpec& split,
                  const ModelConfig& mcfg, const TrainArtifacts& artifacts,
                  const std::filesystem::path& out_dir) {
    tcfg.validate();
    ecfg.validate();

    const TeacherSnapshot* teacher = artifacts.teacher;
    bool needs_teacher = tcfg.variant == Variant::ldd || tcfg.variant == Variant::ldd_minus_init ||
                         tcfg.variant == Variant::ldd_minus_distill || tcfg.variant == Variant::reward_shaping;
    bool needs_init = tcfg.variant == Variant::vae || tcfg.variant == Variant::inverse;
    if (needs_teacher && !teacher)
        throw ConfigError("variant " + to_string(tcfg.variant) + " requires a teacher snapshot");
    if (needs_init && !artifacts.init_params)
        throw ConfigError("variant " + to_string(tcfg.variant) + " requires initialization parameters");

    // variant wiring: initialization source and distillation activity
    Model model(mcfg, tcfg.seed);
    switch (tcfg.variant) {
        case Variant::scratch:
        case Variant::reward_shaping:
        case Variant::ldd_minus_init:
            break;  // random init
        case Variant::ldd:
        case Variant::ldd_minus_distill:
            model.copy_group_from(teacher->model(), ParamGroup::rep);
            model.copy_group_from(teacher->model(), ParamGroup::delta);
            break;
        case Variant::vae:
        case Variant::inverse:
            if (artifacts.init_params->config().repr != mcfg.repr)
                throw ConfigError("init checkpoint representation width mismatch");
            model = *artifacts.init_params;
            break;
    }
    bool distill = (tcfg.variant == Variant::ldd || tcfg.variant == Variant::ldd_minus_init) &&
                   tcfg.weights.alpha_d > 0.0;
    bool shaping = tcfg.variant == Variant::reward_shaping && tcfg.shaping_lambda > 0.0;

    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << metrics_csv_header() << "\n";

    Optimizer opt(tcfg.optim, model.param_tensors_const());
    std::vector<ActorState> actors;
    actors.reserve(static_cast<size_t>(tcfg.n_actors));
    for (int i = 0; i < tcfg.n_actors; ++i) actors.emplace_back(ecfg, split, Side::train);

    Rng action_rng(mix_seed(tcfg.seed, 0x5a371e));
    int fs = mcfg.frame_stack;

    auto reset_actor = [&](ActorState& a, int actor_idx) {
        uint64_t ep_seed = mix_seed(tcfg.seed, 0xe50 + static_cast<uint64_t>(actor_idx), static_cast<uint64_t>(a.episode_counter));
        a.history.clear();
        a.history.push_back(a.env.reset(ep_seed));
        a.episode_counter++;
        a.episode_return = 0.0;
    };
    for (int i = 0; i < tcfg.n_actors; ++i) reset_actor(actors[static_cast<size_t>(i)], i);

    int64_t frames = 0;
    int64_t episodes_done = 0;
    int64_t next_eval = tcfg.eval_cadence;
    int64_t next_ckpt = tcfg.checkpoint_cadence;
    double ret_sum = 0.0;
    int64_t ret_count = 0;
    double jpi_sum = 0, jv_sum = 0, h_sum = 0, jd_sum = 0, pen_sum = 0;
    int64_t loss_count = 0, pen_count = 0;
    TrainResult result;
    bool first_update = true;

    Tape tape;
    while (frames < tcfg.total_frames) {
        tape.clear();
        Model::Bound bound = model.bind(tape);
        std::vector<StepRecord> steps;
        steps.reserve(static_cast<size_t>(tcfg.n_actors) * static_cast<size_t>(tcfg.unroll));

        for (int t = 0; t < tcfg.unroll; ++t) {
            for (int ai = 0; ai < tcfg.n_actors; ++ai) {
                ActorState& a = actors[static_cast<size_t>(ai)];
                if (a.env.done()) reset_actor(a, ai);

                Model::ObsWindow window;
                for (const auto& o : a.history) window.push_back(&o);

                StepRecord rec;
                rec.actor = ai;
                rec.rep = model.encode(tape, bound, window);
                rec.logits = model.policy_logits(tape, bound, rec.rep);
                rec.value = tape.flatten(model.value_out(tape, bound, rec.rep));
                if (distill) rec.teacher_rep = teacher->model().encode_value(window);

                const Tensor& z = tape.val(rec.logits);
                if (z.size() > 16) throw ShapeError("train: action space too large for sampler");
                double m = z[0];
                for (int64_t k = 1; k < z.size(); ++k) m = std::max(m, z[k]);
                double probs[16];
                double s = 0.0;
                for (int64_t k = 0; k < z.size(); ++k) {
                    probs[k] = std::exp(z[k] - m);
                    s += probs[k];
                }
                double u = action_rng.uniform() * s;
                double acc = 0.0;
                int action = static_cast<int>(z.size()) - 1;
                for (int64_t k = 0; k < z.size(); ++k) {
                    acc += probs[k];
                    if (u < acc) {
                        action = static_cast<int>(k);
                        break;
                    }
                }

                StepResult res = a.env.step(action);
                rec.action = action;
                rec.done = res.done ? 1 : 0;
                rec.reward = res.reward;
                a.episode_return += res.reward;
                if (shaping) {
                    double pen = reward_shaping_penalty(*teacher, window, res.obs, tcfg.shaping_lambda);
                    rec.reward += pen;
                    pen_sum += pen;
                    ++pen_count;
                }
                if (res.done) {
                    ++episodes_done;
                    ret_sum += a.episode_return;
                    ++ret_count;
                }
                steps.push_back(std::move(rec));

                a.history.push_back(std::move(res.obs));
                while (static_cast<int>(a.history.size()) > fs) a.history.pop_front();
                ++frames;
            }
        }

        // bootstrap values under current parameters
        std::vector<double> bootstrap(static_cast<size_t>(tcfg.n_actors), 0.0);
        for (int ai = 0; ai < tcfg.n_actors; ++ai) {
            ActorState& a = actors[static_cast<size_t>(ai)];
            if (a.env.done()) continue;
            Model::ObsWindow window;
            for (const auto& o : a.history) window.push_back(&o);
            Var rep = model.encode(tape, bound, window);
            Var v = model.value_out(tape, bound, rep);
            bootstrap[static_cast<size_t>(ai)] = tape.val(v)[0];
        }

        // per-actor return recursion, then a single flat loss
        std::vector<double> returns(steps.size());
        for (int ai = 0; ai < tcfg.n_actors; ++ai) {
            std::vector<double> rw, g;
            std::vector<uint8_t> dn;
            std::vector<size_t> idx;
            for (size_t si = 0; si < steps.size(); ++si) {
                if (steps[si].actor != ai) continue;
                idx.push_back(si);
                rw.push_back(steps[si].reward);
                dn.push_back(steps[si].done);
            }
            g = compute_returns(rw, dn, ecfg.gamma, bootstrap[static_cast<size_t>(ai)]);
            for (size_t k = 0; k < idx.size(); ++k) returns[idx[k]] = g[k];
        }

        double alpha_d_now = tcfg.weights.alpha_d;
        if (tcfg.alpha_d_anneal == "linear")
            alpha_d_now *= std::max(0.0, 1.0 - static_cast<double>(frames) / static_cast<double>(tcfg.total_frames));

        std::vector<Var> logits, values, reps;
        std::vector<int> actions;
        std::vector<Tensor> teacher_reps;
        for (auto& rec : steps) {
            logits.push_back(rec.logits);
            values.push_back(rec.value);
            reps.push_back(rec.rep);
            actions.push_back(rec.action);
            if (distill) teacher_reps.push_back(std::move(rec.teacher_rep));
        }
        AssembledLoss parts = assemble_loss(tape, logits, values, actions, returns, tcfg.weights,
                                            distill ? &reps : nullptr,
                                            distill ? &teacher_reps : nullptr,
                                            tcfg.distill_norm, alpha_d_now, nullptr);
        tape.backward(parts.total);
        if (first_update) {
            result.first_update_jd = parts.j_d;
            first_update = false;
        }

        std::vector<Tensor*> params = model.param_tensors();
        std::vector<const Tensor*> grads;
        grads.reserve(bound.vars.size());
        for (Var v : bound.vars) grads.push_back(&tape.grad(v));
        opt.step(params, grads);

        jpi_sum += parts.j_pi;
        jv_sum += parts.j_v;
        h_sum += parts.entropy;
        jd_sum += parts.j_d;
        ++loss_count;

        if (frames >= next_ckpt && tcfg.checkpoint_cadence > 0) {
            save_checkpoint(model.to_checkpoint({{"variant", to_string(tcfg.variant)},
                                                 {"seed", std::to_string(tcfg.seed)},
                                                 {"frames", std::to_string(frames)}}),
                            out_dir / ("ckpt_" + std::to_string(frames) + ".bin"));
            next_ckpt += tcfg.checkpoint_cadence;
        }

        if (frames >= next_eval || frames >= tcfg.total_frames) {
            double train_wr = evaluate_win_rate(model, ecfg, split, Side::train, tcfg.eval_episodes, mix_seed(tcfg.seed, 0xe7a1));
            double eval_wr = evaluate_win_rate(model, ecfg, split, Side::eval, tcfg.eval_episodes, mix_seed(tcfg.seed, 0xe7a1));
            double mean_ret = ret_count > 0 ? ret_sum / static_cast<double>(ret_count) : 0.0;
            int64_t denom = std::max<int64_t>(loss_count, 1);
            csv << frames << "," << episodes_done << "," << to_string(tcfg.variant) << "," << tcfg.seed << ","
                << format_double(train_wr) << "," << format_double(eval_wr) << "," << format_double(mean_ret) << ","
                << format_double(jpi_sum / denom) << "," << format_double(jv_sum / denom) << ","
                << format_double(h_sum / denom) << "," << format_double(jd_sum / denom) << ","
                << format_double(pen_count > 0 ? pen_sum / static_cast<double>(pen_count) : 0.0) << "\n";
            if (train_wr >= 0.9 && result.frames_to_90_train < 0) result.frames_to_90_train = frames;
            result.final_train_win = train_wr;
            result.final_eval_win = eval_wr;
            write_file_atomic(out_dir / "metrics.csv", csv.str());
            ret_sum = 0;
            ret_count = 0;
            jpi_sum = jv_sum = h_sum = jd_sum = pen_sum = 0;
            loss_count = 0;
            pen_count = 0;
            while (next_eval <= frames) next_eval += tcfg.eval_cadence;
        }
    }

    result.episodes = episodes_done;
    result.metrics_path = out_dir / "metrics.csv";
    write_file_atomic(result.metrics_path, csv.str());
    result.checkpoint_path = out_dir / "final.bin";
    save_checkpoint(model.to_checkpoint({{"variant", to_string(tcfg.variant)},
                                         {"seed", std::to_string(tcfg.seed)},
                                         {"frames", std::to_string(frames)}}),
                    result.checkpoint_path);
    return result;
}

}  // namespace ldd
