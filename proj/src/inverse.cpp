#include "ldd/inverse.hpp"

#include <cmath>

namespace ldd {

namespace {

struct LabeledTransition {
    Model::ObsWindow before;
    Model::ObsWindow after;
    int action;
};

std::vector<LabeledTransition> enumerate_labeled(const DemoStore& store, int frame_stack) {
    std::vector<LabeledTransition> out;
    for (const auto& traj : store.trajs) {
        for (int t = 0; t + 1 < traj.length(); ++t) {
            LabeledTransition lt;
            for (int f = std::max(0, t - frame_stack + 1); f <= t; ++f)
                lt.before.push_back(&traj.obs[static_cast<size_t>(f)]);
            for (int f = std::max(0, t + 1 - frame_stack + 1); f <= t + 1; ++f)
                lt.after.push_back(&traj.obs[static_cast<size_t>(f)]);
            lt.action = traj.actions.empty() ? -1 : traj.actions[static_cast<size_t>(t)];
            out.push_back(std::move(lt));
        }
    }
    return out;
}

}  // namespace

InverseModel::InverseModel(const ModelConfig& mcfg, uint64_t seed)
    : enc_(mcfg, mix_seed(seed, 0x14e)), head_w_({2 * mcfg.repr, mcfg.n_actions}), head_b_({mcfg.n_actions}) {
    Rng rng(mix_seed(seed, 0x14e4));
    double b = std::sqrt(3.0) / std::sqrt(static_cast<double>(2 * mcfg.repr));
    for (int64_t i = 0; i < head_w_.size(); ++i) head_w_[i] = rng.uniform(-b, b);
}

Var InverseModel::logits(Tape& tape, const Model::Bound& enc_bound, Var head_w_var, Var head_b_var,
                         const Model::ObsWindow& before, const Model::ObsWindow& after) const {
    Var r1 = enc_.encode(tape, enc_bound, before);
    Var r2 = enc_.encode(tape, enc_bound, after);
    Var x = tape.concat({r1, r2});
    return tape.add(tape.matmul(x, head_w_var), head_b_var);
}

int InverseModel::predict(const Model::ObsWindow& before, const Model::ObsWindow& after) const {
    Tape tape;
    Model::Bound b = enc_.bind(tape, false);
    Var w = tape.leaf_ref(&head_w_, false);
    Var bias = tape.leaf_ref(&head_b_, false);
    Var z = logits(tape, b, w, bias, before, after);
    const Tensor& t = tape.val(z);
    int best = 0;
    for (int64_t i = 1; i < t.size(); ++i)
        if (t[i] > t[best]) best = static_cast<int>(i);
    return best;
}

InverseResult train_inverse_model(const DemoStore& labeled, const InverseConfig& icfg, const ModelConfig& mcfg) {
    if (labeled.trajs.empty()) throw ConfigError("train_inverse_model: empty store");
    if (!labeled.header.labeled) throw ContractError("train_inverse_model: store is unlabeled");

    auto [train_store, held_store] = split_holdout(labeled, icfg.holdout_fraction, icfg.seed);
    InverseModel inv(mcfg, icfg.seed);

    std::vector<ParamGroup> rep_only{ParamGroup::rep};
    std::vector<const Tensor*> shapes = inv.encoder().param_tensors_const(rep_only);
    shapes.push_back(&inv.head_w());
    shapes.push_back(&inv.head_b());
    Optimizer opt(icfg.optim, shapes);

    std::vector<LabeledTransition> transitions = enumerate_labeled(train_store, mcfg.frame_stack);

    Tape tape;
    for (int epoch = 0; epoch < icfg.epochs; ++epoch) {
        Rng rng(mix_seed(icfg.seed, 0x14e9, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(transitions.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        if (icfg.epoch_transition_cap > 0 && static_cast<int64_t>(order.size()) > icfg.epoch_transition_cap)
            order.resize(static_cast<size_t>(icfg.epoch_transition_cap));

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(icfg.batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(icfg.batch));
            tape.clear();
            Model::Bound bound = inv.encoder().bind_group(tape, rep_only);
            Var wv = tape.leaf_ref(&inv.head_w(), true);
            Var bv = tape.leaf_ref(&inv.head_b(), true);

            std::vector<Var> per_logits;
            std::vector<int> targets;
            for (size_t i = start; i < end; ++i) {
                const auto& lt = transitions[order[i]];
                per_logits.push_back(inv.logits(tape, bound, wv, bv, lt.before, lt.after));
                targets.push_back(lt.action);
            }
            Var ce = tape.cross_entropy(tape.stack_rows(per_logits), targets);
            Var loss = tape.mean_all(ce);
            tape.backward(loss);

            std::vector<Tensor*> params = inv.encoder().param_tensors(rep_only);
            params.push_back(&inv.head_w());
            params.push_back(&inv.head_b());
            std::vector<const Tensor*> grads;
            size_t vi = 0;
            for (const auto& p : inv.encoder().params()) {
                Var v = bound.vars[vi++];
                if (p.group == ParamGroup::rep) grads.push_back(&tape.grad(v));
            }
            grads.push_back(&tape.grad(wv));
            grads.push_back(&tape.grad(bv));
            opt.step(params, grads);
        }
    }

    std::vector<LabeledTransition> held = enumerate_labeled(held_store, mcfg.frame_stack);
    int64_t correct = 0;
    for (const auto& lt : held)
        correct += inv.predict(lt.before, lt.after) == lt.action ? 1 : 0;
    double acc = held.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(held.size());
    return {std::move(inv), acc};
}

DemoStore pseudo_label(const DemoStore& demos, const InverseModel& inv) {
    if (demos.header.vocab_hash != Vocab::instance().hash())
        throw IoError(IoError::Code::vocab_hash_mismatch, "pseudo_label: vocabulary hash mismatch");

    DemoStore out = demos;
    int fs = inv.encoder().config().frame_stack;
    for (auto& traj : out.trajs) {
        traj.actions.resize(static_cast<size_t>(std::max(0, traj.length() - 1)));
        for (int t = 0; t + 1 < traj.length(); ++t) {
            Model::ObsWindow before, after;
            for (int f = std::max(0, t - fs + 1); f <= t; ++f) before.push_back(&traj.obs[static_cast<size_t>(f)]);
            for (int f = std::max(0, t + 1 - fs + 1); f <= t + 1; ++f) after.push_back(&traj.obs[static_cast<size_t>(f)]);
            traj.actions[static_cast<size_t>(t)] = static_cast<uint8_t>(inv.predict(before, after));
        }
        traj.pseudo_labeled = true;
    }
    out.header.labeled = true;
    if (out.header.policy_id.find("+pseudo") == std::string::npos)
        out.header.policy_id += "+pseudo";
    return out;
}

Model behavior_clone(const DemoStore& labeled, const BcConfig& bcfg, const ModelConfig& mcfg) {
    if (labeled.trajs.empty()) throw ConfigError("behavior_clone: empty store");
    if (!labeled.header.labeled) throw ContractError("behavior_clone: store is unlabeled");

    Model model(mcfg, bcfg.seed);
    std::vector<ParamGroup> trained{ParamGroup::rep, ParamGroup::pi};
    Optimizer opt(bcfg.optim, model.param_tensors_const(trained));
    std::vector<LabeledTransition> transitions = enumerate_labeled(labeled, mcfg.frame_stack);

    Tape tape;
    for (int epoch = 0; epoch < bcfg.epochs; ++epoch) {
        Rng rng(mix_seed(bcfg.seed, 0xbc10, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(transitions.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        if (bcfg.epoch_transition_cap > 0 && static_cast<int64_t>(order.size()) > bcfg.epoch_transition_cap)
            order.resize(static_cast<size_t>(bcfg.epoch_transition_cap));

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(bcfg.batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(bcfg.batch));
            tape.clear();
            Model::Bound bound = model.bind_group(tape, trained);
            std::vector<Var> per_logits;
            std::vector<int> targets;
            for (size_t i = start; i < end; ++i) {
                const auto& lt = transitions[order[i]];
                Var rep = model.encode(tape, bound, lt.before);
                per_logits.push_back(model.policy_logits(tape, bound, rep));
                targets.push_back(lt.action);
            }
            Var loss = tape.mean_all(tape.cross_entropy(tape.stack_rows(per_logits), targets));
            tape.backward(loss);

            std::vector<Tensor*> params = model.param_tensors(trained);
            std::vector<const Tensor*> grads;
            size_t vi = 0;
            for (const auto& p : model.params()) {
                Var v = bound.vars[vi++];
                if (p.group == ParamGroup::rep || p.group == ParamGroup::pi)
                    grads.push_back(&tape.grad(v));
            }
            opt.step(params, grads);
        }
    }
    return model;
}

}  // namespace ldd
