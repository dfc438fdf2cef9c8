#include "ldd/pretrain.hpp"

#include <cmath>
#include <sstream>

namespace ldd {

void PretrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("pretrain.epochs must be >= 1");
    if (batch < 1) throw ConfigError("pretrain.batch must be >= 1");
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        throw ConfigError("pretrain.eval_fraction must be in (0,1)");
    if (patience < 1) throw ConfigError("pretrain.patience must be >= 1");
}

void VaeConfig::validate() const {
    if (epochs < 1) throw ConfigError("vae.epochs must be >= 1");
    if (batch < 1) throw ConfigError("vae.batch must be >= 1");
    if (beta < 0.0) throw ConfigError("vae.beta must be >= 0");
}

std::string PretrainReport::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,heldout_acc\n";
    for (size_t i = 0; i < train_loss.size(); ++i)
        os << i << "," << format_double(train_loss[i]) << "," << format_double(heldout_acc[i]) << "\n";
    return os.str();
}

std::vector<TransitionPair> enumerate_transitions(const DemoStore& store, int frame_stack) {
    std::vector<TransitionPair> out;
    for (const auto& traj : store.trajs) {
        for (int t = 0; t + 1 < traj.length(); ++t) {
            TransitionPair p;
            for (int f = std::max(0, t - frame_stack + 1); f <= t; ++f)
                p.window.push_back(&traj.obs[static_cast<size_t>(f)]);
            p.next = &traj.obs[static_cast<size_t>(t) + 1];
            out.push_back(std::move(p));
        }
    }
    return out;
}

Var dynamics_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                  const std::vector<TransitionPair>& batch) {
    if (batch.empty()) throw ContractError("dynamics_loss: empty batch");
    std::vector<Var> per_sample;
    per_sample.reserve(batch.size());
    for (const auto& pair : batch) {
        if (pair.window.empty() || pair.next == nullptr)
            throw ContractError("dynamics_loss: malformed transition");
        if (pair.next->step_index != pair.window.back()->step_index + 1)
            throw ContractError("dynamics_loss: non-consecutive pair (step " + std::to_string(pair.window.back()->step_index) + " -> " + std::to_string(pair.next->step_index) + ")");
        Model::Encoded enc = model.encode_full(tape, bound, pair.window);
        Var logits = model.dynamics_logits(tape, bound, enc, *pair.window.back());  // [HW x S], egocentric slots
        std::vector<int> targets = model.egocentric_targets(*pair.window.back(), *pair.next);
        Var ce = tape.cross_entropy(logits, targets);  // [HW]
        per_sample.push_back(tape.mean_all(ce));
    }
    return tape.mean_all(tape.concat(per_sample));
}

double eval_frame_accuracy_fn(const GridPredictor& predict, const DemoStore& heldout, int frame_stack) {
    if (heldout.trajs.empty()) throw ContractError("eval_frame_accuracy: empty store");
    std::vector<TransitionPair> pairs = enumerate_transitions(heldout, frame_stack);
    int64_t correct = 0, total = 0;
    for (const auto& pair : pairs) {
        std::vector<uint8_t> pred = predict(pair.window);
        const auto& truth = pair.next->grid;
        for (size_t i = 0; i < truth.size(); ++i) {
            correct += pred[i] == truth[i] ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double eval_frame_accuracy(const Model& model, const DemoStore& heldout) {
    return eval_frame_accuracy_fn(
        [&](const Model::ObsWindow& w) { return model.predict_next_grid(w); }, heldout,
        model.config().frame_stack);
}

Var vae_kl(Tape& tape, Var mu, Var logvar) {
    std::vector<int> shape = tape.val(mu).shape();
    Var mu2 = tape.mul(mu, mu);
    Var var = tape.exp_op(logvar);
    Var ones = tape.constant(Tensor::full(shape, 1.0));
    Var terms = tape.sub(tape.add(mu2, var), tape.add(ones, logvar));
    return tape.scale(tape.sum_all(terms), 0.5);
}

PretrainResult pretrain_dynamics(const DemoStore& store, const PretrainConfig& pcfg, const ModelConfig& mcfg) {
    pcfg.validate();
    if (store.trajs.empty()) throw ConfigError("pretrain_dynamics: empty demo store");

    auto [train_store, held_store] = split_holdout(store, pcfg.eval_fraction, pcfg.seed);

    Model model(mcfg, pcfg.seed);
    std::vector<ParamGroup> trained{ParamGroup::rep, ParamGroup::delta};
    Optimizer opt(pcfg.optim, model.param_tensors_const(trained));

    std::vector<TransitionPair> transitions = enumerate_transitions(train_store, mcfg.frame_stack);
    if (transitions.empty()) throw ConfigError("pretrain_dynamics: store has no transitions");

    PretrainReport report;
    report.demo_hash = store.content_hash();

    Model best = model;
    double best_acc = -1.0;
    int best_epoch = -1;
    int since_best = 0;

    Tape tape;
    for (int epoch = 0; epoch < pcfg.epochs; ++epoch) {
        Rng rng(mix_seed(pcfg.seed, 0xe90c4, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(transitions.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        if (pcfg.epoch_transition_cap > 0 && static_cast<int64_t>(order.size()) > pcfg.epoch_transition_cap)
            order.resize(static_cast<size_t>(pcfg.epoch_transition_cap));

        double loss_sum = 0.0;
        int64_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(pcfg.batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(pcfg.batch));
            std::vector<TransitionPair> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(transitions[order[i]]);

            tape.clear();
            Model::Bound bound = model.bind_group(tape, trained);
            Var loss = dynamics_loss(tape, model, bound, batch);
            tape.backward(loss);
            loss_sum += tape.val(loss)[0];
            ++n_batches;

            std::vector<Tensor*> params = model.param_tensors(trained);
            std::vector<const Tensor*> grads;
            size_t vi = 0;
            for (const auto& p : model.params()) {
                Var v = bound.vars[vi++];
                if (p.group == ParamGroup::rep || p.group == ParamGroup::delta)
                    grads.push_back(&tape.grad(v));
            }
            opt.step(params, grads);
        }

        report.train_loss.push_back(loss_sum / static_cast<double>(std::max<int64_t>(n_batches, 1)));
        double acc = eval_frame_accuracy(model, held_store);
        report.heldout_acc.push_back(acc);

        if (acc > best_acc) {
            best_acc = acc;
            best_epoch = epoch;
            best = model;
            since_best = 0;
        } else if (++since_best >= pcfg.patience) {
            break;
        }
    }

    report.best_epoch = best_epoch;
    report.best_acc = best_acc;

    std::vector<std::pair<std::string, std::string>> provenance{
        {"pretrain.seed", std::to_string(pcfg.seed)},
        {"pretrain.best_epoch", std::to_string(best_epoch)},
        {"pretrain.best_acc", format_double(best_acc)},
        {"demos.hash", std::to_string(report.demo_hash)},
        {"demos.policy", store.header.policy_id},
    };
    TeacherSnapshot teacher(best, provenance);
    return {std::move(best), std::move(teacher), std::move(report)};
}

Model vae_pretrain(const DemoStore& store, const VaeConfig& vcfg, const ModelConfig& mcfg) {
    vcfg.validate();
    if (store.trajs.empty()) throw ConfigError("vae_pretrain: empty demo store");

    Model model(mcfg, vcfg.seed);
    int cells = mcfg.grid * mcfg.grid;
    int n_sym = model.config().n_symbols;
    int r = mcfg.repr;

    Rng init_rng(mix_seed(vcfg.seed, 0x7ae));
    auto finit = [&](int in, int out) {
        double bnd = std::sqrt(3.0) / std::sqrt(static_cast<double>(in));
        Tensor t({in, out});
        for (int64_t i = 0; i < t.size(); ++i) t[i] = init_rng.uniform(-bnd, bnd);
        return t;
    };
    // encoder mean is the trunk output itself; only log-variance and the
    // decoder get extra (discarded) parameters
    Tensor w_lv = finit(r, r), b_lv({r});
    Tensor w_dec = finit(r, cells * n_sym), b_dec({static_cast<int>(cells * n_sym)});

    std::vector<ParamGroup> rep_only{ParamGroup::rep};
    std::vector<const Tensor*> opt_shapes = model.param_tensors_const(rep_only);
    opt_shapes.push_back(&w_lv);
    opt_shapes.push_back(&b_lv);
    opt_shapes.push_back(&w_dec);
    opt_shapes.push_back(&b_dec);
    Optimizer opt(vcfg.optim, opt_shapes);

    // flat list of observations
    std::vector<const Observation*> frames;
    for (const auto& t : store.trajs)
        for (const auto& o : t.obs) frames.push_back(&o);

    Tape tape;
    for (int epoch = 0; epoch < vcfg.epochs; ++epoch) {
        Rng rng(mix_seed(vcfg.seed, 0x7ae5, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(frames.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        if (vcfg.epoch_obs_cap > 0 && static_cast<int64_t>(order.size()) > vcfg.epoch_obs_cap)
            order.resize(static_cast<size_t>(vcfg.epoch_obs_cap));

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(vcfg.batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(vcfg.batch));
            tape.clear();
            Model::Bound bound = model.bind_group(tape, rep_only);
            Var v_wlv = tape.leaf_ref(&w_lv, true);
            Var v_blv = tape.leaf_ref(&b_lv, true);
            Var v_wdec = tape.leaf_ref(&w_dec, true);
            Var v_bdec = tape.leaf_ref(&b_dec, true);

            std::vector<Var> per_sample;
            for (size_t i = start; i < end; ++i) {
                const Observation* o = frames[order[i]];
                Model::ObsWindow w{o};
                Var mu = model.encode(tape, bound, w);
                Var lv = tape.add(tape.matmul(mu, v_wlv), v_blv);
                Var sigma = tape.exp_op(tape.scale(lv, 0.5));
                Tensor noise({r});
                for (int j = 0; j < r; ++j) noise[j] = rng.normal();
                Var z = tape.add(mu, tape.mul(sigma, tape.constant(std::move(noise))));
                Var logits = tape.reshape(tape.add(tape.matmul(z, v_wdec), v_bdec), {cells, n_sym});
                std::vector<int> targets = model.egocentric_targets(*o, *o);  // reconstruct in slot order
                Var recon = tape.mean_all(tape.cross_entropy(logits, targets));  // per-cell mean
                Var kl = vae_kl(tape, mu, lv);
                per_sample.push_back(tape.add(recon, tape.scale(kl, vcfg.beta / static_cast<double>(cells))));
            }
            Var loss = tape.mean_all(tape.concat(per_sample));
            tape.backward(loss);

            std::vector<Tensor*> params = model.param_tensors(rep_only);
            params.push_back(&w_lv);
            params.push_back(&b_lv);
            params.push_back(&w_dec);
            params.push_back(&b_dec);
            std::vector<const Tensor*> grads;
            size_t vi = 0;
            for (const auto& p : model.params()) {
                Var v = bound.vars[vi++];
                if (p.group == ParamGroup::rep) grads.push_back(&tape.grad(v));
            }
            grads.push_back(&tape.grad(v_wlv));
            grads.push_back(&tape.grad(v_blv));
            grads.push_back(&tape.grad(v_wdec));
            grads.push_back(&tape.grad(v_bdec));
            opt.step(params, grads);
        }
    }
    return model;
}

}  // namespace ldd
