#include "ldd/oracle_suite.hpp"

#include <cmath>
#include <functional>

#include "ldd/grad_check.hpp"
#include "ldd/model.hpp"
#include "ldd/pretrain.hpp"
#include "ldd/rl.hpp"

namespace ldd {

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

// dot with fixed random weights so output gradients are non-uniform
Var weighted_sum(Tape& tape, Var x, const Tensor& w) {
    return tape.sum_all(tape.mul(x, tape.constant(w)));
}

struct PrimitiveCase {
    const char* name;
    // fills `inputs` once per config; `build` reconstructs the loss from the
    // current input values on a fresh tape
    std::function<void(Rng&, std::vector<Tensor>& inputs, std::vector<Tensor>& aux)> init;
    std::function<Var(Tape&, std::vector<Var>&, const std::vector<Tensor>& aux)> build;
};

const std::vector<PrimitiveCase>& primitive_cases() {
    static const std::vector<PrimitiveCase> cases = {
        {"add",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(4), m = 1 + r.uniform_int(3);
             in = {randn(r, {m, n}), randn(r, {m, n})};
             aux = {randn(r, {m, n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.add(v[0], v[1]), aux[0]); }},
        {"sub",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(4);
             in = {randn(r, {n}), randn(r, {n})};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.sub(v[0], v[1]), aux[0]); }},
        {"mul",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(4);
             in = {randn(r, {n}), randn(r, {n})};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.mul(v[0], v[1]), aux[0]); }},
        {"scale",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(4);
             in = {randn(r, {n})};
             aux = {randn(r, {n}), Tensor::scalar(r.uniform(-2, 2))};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.scale(v[0], aux[1][0]), aux[0]); }},
        {"add_rowvec",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(3), d = 2 + r.uniform_int(3);
             in = {randn(r, {n, d}), randn(r, {d})};
             aux = {randn(r, {n, d})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.add_rowvec(v[0], v[1]), aux[0]); }},
        {"relu",
         [](Rng& r, auto& in, auto& aux) {
             int n = 3 + r.uniform_int(5);
             Tensor x({n});
             // keep inputs away from the kink at 0
             for (int i = 0; i < n; ++i) x[i] = (r.uniform_int(2) ? 1.0 : -1.0) * r.uniform(0.05, 1.5);
             in = {std::move(x)};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.relu(v[0]), aux[0]); }},
        {"tanh",
         [](Rng& r, auto& in, auto& aux) {
             int n = 3 + r.uniform_int(5);
             in = {randn(r, {n})};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.tanh_op(v[0]), aux[0]); }},
        {"exp",
         [](Rng& r, auto& in, auto& aux) {
             int n = 3 + r.uniform_int(5);
             Tensor x({n});
             for (int i = 0; i < n; ++i) x[i] = r.uniform(-1.5, 1.5);
             in = {std::move(x)};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.exp_op(v[0]), aux[0]); }},
        {"sqrt",
         [](Rng& r, auto& in, auto& aux) {
             int n = 3 + r.uniform_int(5);
             Tensor x({n});
             for (int i = 0; i < n; ++i) x[i] = r.uniform(0.05, 2.0);
             in = {std::move(x)};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.sqrt_op(v[0]), aux[0]); }},
        {"softmax",
         [](Rng& r, auto& in, auto& aux) {
             int n = 1 + r.uniform_int(3), c = 2 + r.uniform_int(4);
             in = {randn(r, {n, c})};
             aux = {randn(r, {n, c})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.softmax(v[0]), aux[0]); }},
        {"matmul",
         [](Rng& r, auto& in, auto& aux) {
             int m = 1 + r.uniform_int(3), k = 1 + r.uniform_int(3), n = 1 + r.uniform_int(3);
             in = {randn(r, {m, k}), randn(r, {k, n})};
             aux = {randn(r, {m, n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.matmul(v[0], v[1]), aux[0]); }},
        {"matmul_vec",
         [](Rng& r, auto& in, auto& aux) {
             int k = 1 + r.uniform_int(4), n = 1 + r.uniform_int(4);
             in = {randn(r, {k}), randn(r, {k, n})};
             aux = {randn(r, {n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.matmul(v[0], v[1]), aux[0]); }},
        {"matmul_nt",
         [](Rng& r, auto& in, auto& aux) {
             int m = 1 + r.uniform_int(3), k = 1 + r.uniform_int(3), n = 1 + r.uniform_int(3);
             in = {randn(r, {m, k}), randn(r, {n, k})};
             aux = {randn(r, {m, n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.matmul_nt(v[0], v[1]), aux[0]); }},
        {"embedding_lookup",
         [](Rng& r, auto& in, auto& aux) {
             int vdim = 3 + r.uniform_int(4), d = 2 + r.uniform_int(3), n = 2 + r.uniform_int(5);
             in = {randn(r, {vdim, d})};
             Tensor ids({n});
             for (int i = 0; i < n; ++i) ids[i] = r.uniform_int(vdim);  // repeats exercise scatter-add
             aux = {randn(r, {n, d}), std::move(ids)};
         },
         [](Tape& t, auto& v, const auto& aux) {
             std::vector<int> ids(static_cast<size_t>(aux[1].size()));
             for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(aux[1][static_cast<int64_t>(i)]);
             return weighted_sum(t, t.embedding_lookup(v[0], ids), aux[0]);
         }},
        {"sum",
         [](Rng& r, auto& in, auto& aux) {
             in = {randn(r, {2 + r.uniform_int(4), 2 + r.uniform_int(3)})};
             aux = {};
         },
         [](Tape& t, auto& v, const auto&) { return t.sum_all(v[0]); }},
        {"mean",
         [](Rng& r, auto& in, auto& aux) {
             in = {randn(r, {2 + r.uniform_int(4)})};
             aux = {};
         },
         [](Tape& t, auto& v, const auto&) { return t.mean_all(v[0]); }},
        {"mean_rows",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(3), d = 2 + r.uniform_int(3);
             in = {randn(r, {n, d})};
             aux = {randn(r, {d})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.mean_rows(v[0]), aux[0]); }},
        {"concat",
         [](Rng& r, auto& in, auto& aux) {
             int a = 1 + r.uniform_int(3), b = 1 + r.uniform_int(3);
             in = {randn(r, {a}), randn(r, {b})};
             aux = {randn(r, {a + b})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.concat({v[0], v[1]}), aux[0]); }},
        {"concat_cols",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(2), p = 1 + r.uniform_int(3), q = 1 + r.uniform_int(3);
             in = {randn(r, {n, p}), randn(r, {n, q})};
             aux = {randn(r, {n, p + q})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.concat_cols(v[0], v[1]), aux[0]); }},
        {"reshape",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(2), d = 2;
             in = {randn(r, {n, d})};
             aux = {randn(r, {n * d})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.flatten(v[0]), aux[0]); }},
        {"stack_rows",
         [](Rng& r, auto& in, auto& aux) {
             int d = 2 + r.uniform_int(3);
             in = {randn(r, {d}), randn(r, {d}), randn(r, {d})};
             aux = {randn(r, {3, d})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.stack_rows({v[0], v[1], v[2]}), aux[0]); }},
        {"cross_entropy",
         [](Rng& r, auto& in, auto& aux) {
             int b = 1 + r.uniform_int(4), c = 2 + r.uniform_int(4);
             in = {randn(r, {b, c})};
             Tensor targets({b});
             for (int i = 0; i < b; ++i) targets[i] = r.uniform_int(c);
             aux = {randn(r, {b}), std::move(targets)};
         },
         [](Tape& t, auto& v, const auto& aux) {
             std::vector<int> targets(static_cast<size_t>(aux[1].size()));
             for (size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(aux[1][static_cast<int64_t>(i)]);
             return weighted_sum(t, t.cross_entropy(v[0], targets), aux[0]);
         }},
        {"entropy",
         [](Rng& r, auto& in, auto& aux) {
             int b = 1 + r.uniform_int(4), c = 2 + r.uniform_int(4);
             in = {randn(r, {b, c})};
             aux = {randn(r, {b})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.entropy(v[0]), aux[0]); }},
        {"squared_l2",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(5);
             in = {randn(r, {n}), randn(r, {n})};
             aux = {};
         },
         [](Tape& t, auto& v, const auto&) { return t.squared_l2(v[0], v[1]); }},
        {"gather_rows",
         [](Rng& r, auto& in, auto& aux) {
             int src = 3 + r.uniform_int(3), d = 2 + r.uniform_int(3), n = 2 + r.uniform_int(5);
             in = {randn(r, {src, d})};
             Tensor ids({n});
             for (int i = 0; i < n; ++i) ids[i] = r.uniform_int(src + 1) - 1;  // -1 included
             aux = {randn(r, {n, d}), std::move(ids)};
         },
         [](Tape& t, auto& v, const auto& aux) {
             std::vector<int> ids(static_cast<size_t>(aux[1].size()));
             for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(aux[1][static_cast<int64_t>(i)]);
             return weighted_sum(t, t.gather_rows(v[0], ids), aux[0]);
         }},
        {"transpose",
         [](Rng& r, auto& in, auto& aux) {
             int n = 2 + r.uniform_int(3), d = 2 + r.uniform_int(3);
             in = {randn(r, {n, d})};
             aux = {randn(r, {d, n})};
         },
         [](Tape& t, auto& v, const auto& aux) { return weighted_sum(t, t.transpose(v[0]), aux[0]); }},
        {"tile_rows",
         [](Rng& r, auto& in, auto& aux) {
             int d = 2 + r.uniform_int(4), n = 2 + r.uniform_int(3);
             in = {randn(r, {d})};
             aux = {randn(r, {n, d}), Tensor::scalar(n)};
         },
         [](Tape& t, auto& v, const auto& aux) {
             return weighted_sum(t, t.tile_rows(v[0], static_cast<int>(aux[1][0])), aux[0]);
         }},
    };
    return cases;
}

// --- synthetic observations for the composite-loss oracles -------------------

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.grid = 4;
    cfg.n_symbols = 6;
    cfg.n_tokens = 12;
    cfg.n_actions = 5;
    cfg.d_tok = 6;
    cfg.d_sym = 4;
    cfg.d_key = 4;
    cfg.d_val = 4;
    cfg.hidden = 8;
    cfg.repr = 64;
    return cfg;
}

Observation random_obs(Rng& rng, const ModelConfig& cfg, int step_index) {
    Observation o;
    o.step_index = step_index;
    o.grid.resize(static_cast<size_t>(cfg.grid) * cfg.grid);
    for (auto& c : o.grid) c = static_cast<uint8_t>(rng.uniform_int(cfg.n_symbols));
    int n_lines = 3;
    for (int l = 0; l < n_lines; ++l) {
        std::vector<uint16_t> line;
        int len = 4 + rng.uniform_int(4);
        for (int i = 0; i < len; ++i) line.push_back(static_cast<uint16_t>(rng.uniform_int(cfg.n_tokens)));
        o.manual.push_back(std::move(line));
    }
    int msg_len = rng.uniform_int(6);  // sometimes empty
    for (int i = 0; i < msg_len; ++i) o.message.push_back(static_cast<uint16_t>(rng.uniform_int(cfg.n_tokens)));
    return o;
}

}  // namespace

std::vector<OracleCaseResult> run_primitive_oracles(int configs_per_op, uint64_t seed) {
    std::vector<OracleCaseResult> results;
    for (const auto& pc : primitive_cases()) {
        OracleCaseResult res;
        res.name = std::string("primitive/") + pc.name;
        res.configs = configs_per_op;
        for (int c = 0; c < configs_per_op; ++c) {
            Rng rng(mix_seed(seed, fnv1a(pc.name), static_cast<uint64_t>(c)));
            std::vector<Tensor> inputs, aux;
            pc.init(rng, inputs, aux);

            std::vector<Tensor*> params;
            for (auto& t : inputs) params.push_back(&t);

            auto build = [&](Tape& tape) {
                std::vector<Var> vars;
                for (auto& t : inputs) vars.push_back(tape.leaf_ref(&t, true));
                return pc.build(tape, vars, aux);
            };
            auto loss_value = [&]() {
                Tape tape;
                return tape.val(build(tape))[0];
            };
            auto loss_grads = [&]() {
                Tape tape;
                Var loss = build(tape);
                tape.backward(loss);
                std::vector<Tensor> grads;
                Var v = 0;
                for (size_t i = 0; i < inputs.size(); ++i, ++v) grads.push_back(tape.grad(v));
                return grads;
            };
            GradCheckSpec spec;
            spec.seed = mix_seed(seed, static_cast<uint64_t>(c), 0xc0);
            spec.subsample = 1.0;  // primitives are tiny, probe everything
            GradCheckResult r = grad_check(params, loss_value, loss_grads, spec);
            res.max_rel_err = std::max(res.max_rel_err, r.max_rel_err);
            res.coords += r.coords_checked;
        }
        res.pass = res.max_rel_err < res.threshold;
        results.push_back(std::move(res));
    }
    return results;
}

namespace {

OracleCaseResult run_composite(const std::string& name, int configs, uint64_t seed,
                               const std::function<void(uint64_t, double*, int64_t*)>& one_config) {
    OracleCaseResult res;
    res.name = name;
    res.configs = configs;
    for (int c = 0; c < configs; ++c) {
        double err = 0.0;
        int64_t coords = 0;
        one_config(mix_seed(seed, fnv1a(name), static_cast<uint64_t>(c)), &err, &coords);
        res.max_rel_err = std::max(res.max_rel_err, err);
        res.coords += coords;
    }
    res.pass = res.max_rel_err < res.threshold;
    return res;
}

}  // namespace

OracleCaseResult run_dynamics_loss_oracle(int configs, uint64_t seed) {
    return run_composite("loss/dynamics", configs, seed, [](uint64_t cfg_seed, double* err, int64_t* coords) {
        Rng rng(cfg_seed);
        ModelConfig mcfg = tiny_model_config();
        Model model(mcfg, cfg_seed);

        std::vector<Observation> obs;
        int batch = 2 + rng.uniform_int(2);
        for (int i = 0; i < batch; ++i) {
            obs.push_back(random_obs(rng, mcfg, 3 * i));
            obs.push_back(random_obs(rng, mcfg, 3 * i + 1));
        }
        std::vector<TransitionPair> pairs;
        for (int i = 0; i < batch; ++i) {
            TransitionPair p;
            p.window = {&obs[static_cast<size_t>(2 * i)]};
            p.next = &obs[static_cast<size_t>(2 * i) + 1];
            pairs.push_back(std::move(p));
        }

        std::vector<Tensor*> params = model.param_tensors();
        auto build = [&](Tape& tape) {
            Model::Bound bound = model.bind(tape);
            return dynamics_loss(tape, model, bound, pairs);
        };
        auto loss_value = [&]() {
            Tape tape;
            return tape.val(build(tape))[0];
        };
        auto loss_grads = [&]() {
            Tape tape;
            Var loss = build(tape);
            tape.backward(loss);
            // bind() registers leaves first, so vars 0..n-1 line up with params
            std::vector<Tensor> out;
            for (size_t i = 0; i < params.size(); ++i) out.push_back(tape.grad(static_cast<Var>(i)));
            return out;
        };
        GradCheckSpec spec;
        spec.seed = cfg_seed;
        GradCheckResult r = grad_check(params, loss_value, loss_grads, spec);
        *err = r.max_rel_err;
        *coords = r.coords_checked;
    });
}

namespace {

RolloutBatch random_batch(Rng& rng, const ModelConfig& mcfg, std::vector<Observation>& obs_storage) {
    int n = 2 + rng.uniform_int(3);
    RolloutBatch batch;
    batch.gamma = 0.9;
    batch.bootstrap_value = rng.normal();
    for (int i = 0; i < n; ++i) {
        obs_storage.push_back(random_obs(rng, mcfg, i));
    }
    for (int i = 0; i < n; ++i) {
        batch.windows.push_back({&obs_storage[obs_storage.size() - static_cast<size_t>(n - i)]});
        batch.actions.push_back(rng.uniform_int(mcfg.n_actions));
        batch.rewards.push_back(rng.normal());
        batch.dones.push_back(rng.uniform() < 0.2 ? 1 : 0);
    }
    return batch;
}

// The advantage is behind a stop-gradient; finite differences would
// otherwise differentiate through it. Pin it at the base parameters.
void freeze_advantages(RolloutBatch& batch, const Model& model) {
    Tape tape;
    Model::Bound bound = model.bind(tape, false);
    std::vector<double> returns = compute_returns(batch.rewards, batch.dones, batch.gamma, batch.bootstrap_value);
    std::vector<double> adv;
    for (size_t i = 0; i < batch.windows.size(); ++i) {
        Var rep = model.encode(tape, bound, batch.windows[i]);
        Var v = model.value_out(tape, bound, rep);
        adv.push_back(returns[i] - tape.val(v)[0]);
    }
    batch.frozen_advantages = std::move(adv);
}

}  // namespace

OracleCaseResult run_actor_critic_oracle(int configs, uint64_t seed) {
    return run_composite("loss/actor_critic", configs, seed, [](uint64_t cfg_seed, double* err, int64_t* coords) {
        Rng rng(cfg_seed);
        ModelConfig mcfg = tiny_model_config();
        Model model(mcfg, mix_seed(cfg_seed, 1));
        // non-degenerate heads so the advantage and entropy terms vary
        Rng prng(mix_seed(cfg_seed, 2));
        for (auto& p : model.params())
            if (p.group != ParamGroup::rep)
                for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.3 * prng.normal();

        std::vector<Observation> storage;
        storage.reserve(16);
        RolloutBatch batch = random_batch(rng, mcfg, storage);
        freeze_advantages(batch, model);
        LossWeights w;
        w.alpha_v = 0.5;
        w.entropy = 0.05;

        std::vector<Tensor*> params = model.param_tensors();
        auto loss_value = [&]() {
            Tape tape;
            Model::Bound bound = model.bind(tape);
            LossBreakdown lb = actor_critic_loss(tape, model, bound, batch, w);
            return lb.total_value;
        };
        auto loss_grads = [&]() {
            Tape tape;
            Model::Bound bound = model.bind(tape);
            LossBreakdown lb = actor_critic_loss(tape, model, bound, batch, w);
            tape.backward(lb.total);
            std::vector<Tensor> out;
            for (size_t i = 0; i < params.size(); ++i) out.push_back(tape.grad(static_cast<Var>(i)));
            return out;
        };
        GradCheckSpec spec;
        spec.seed = cfg_seed;
        GradCheckResult r = grad_check(params, loss_value, loss_grads, spec);
        *err = r.max_rel_err;
        *coords = r.coords_checked;
    });
}

OracleCaseResult run_joint_loss_oracle(int configs, uint64_t seed) {
    return run_composite("loss/joint", configs, seed, [](uint64_t cfg_seed, double* err, int64_t* coords) {
        Rng rng(cfg_seed);
        ModelConfig mcfg = tiny_model_config();
        Model model(mcfg, mix_seed(cfg_seed, 1));
        Model teacher_model(mcfg, mix_seed(cfg_seed, 7));  // different parameters
        TeacherSnapshot teacher(teacher_model, {});
        Rng prng(mix_seed(cfg_seed, 2));
        for (auto& p : model.params())
            if (p.group != ParamGroup::rep)
                for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.3 * prng.normal();

        std::vector<Observation> storage;
        storage.reserve(16);
        RolloutBatch batch = random_batch(rng, mcfg, storage);
        freeze_advantages(batch, model);
        LossWeights w;
        w.alpha_v = 0.5;
        w.entropy = 0.05;
        w.alpha_d = 0.7;

        std::vector<Tensor*> params = model.param_tensors();
        auto loss_value = [&]() {
            Tape tape;
            Model::Bound bound = model.bind(tape);
            LossBreakdown lb = joint_loss(tape, model, bound, batch, &teacher, w);
            return lb.total_value;
        };
        auto loss_grads = [&]() {
            Tape tape;
            Model::Bound bound = model.bind(tape);
            LossBreakdown lb = joint_loss(tape, model, bound, batch, &teacher, w);
            tape.backward(lb.total);
            std::vector<Tensor> out;
            for (size_t i = 0; i < params.size(); ++i) out.push_back(tape.grad(static_cast<Var>(i)));
            return out;
        };
        GradCheckSpec spec;
        spec.seed = cfg_seed;
        GradCheckResult r = grad_check(params, loss_value, loss_grads, spec);
        *err = r.max_rel_err;
        *coords = r.coords_checked;
    });
}

std::vector<OracleCaseResult> run_gradient_oracle_suite(int configs, uint64_t seed) {
    std::vector<OracleCaseResult> all = run_primitive_oracles(configs, seed);
    all.push_back(run_dynamics_loss_oracle(configs, seed));
    all.push_back(run_actor_critic_oracle(configs, seed));
    all.push_back(run_joint_loss_oracle(configs, seed));
    return all;
}

}  // namespace ldd
