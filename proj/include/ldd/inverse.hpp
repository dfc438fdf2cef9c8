#pragma once

// Inverse-dynamics baseline: a classifier from consecutive observation
// representations to the action between them, used to pseudo-label
// unlabeled demonstrations for behavior cloning.

#include "ldd/demos.hpp"
#include "ldd/model.hpp"
#include "ldd/optim.hpp"

namespace ldd {

struct InverseConfig {
    int epochs = 10;
    int batch = 64;
    double holdout_fraction = 0.1;
    uint64_t seed = 1;
    OptimConfig optim{.lr = 1e-3};  // supervised phase: larger step than RL
    int64_t epoch_transition_cap = 20000;
};

class InverseModel {
public:
    InverseModel(const ModelConfig& mcfg, uint64_t seed);

    Model& encoder() { return enc_; }
    const Model& encoder() const { return enc_; }
    Tensor& head_w() { return head_w_; }
    Tensor& head_b() { return head_b_; }
    const Tensor& head_w() const { return head_w_; }
    const Tensor& head_b() const { return head_b_; }

    // argmax action for the transition (window ending at s_t) -> s_{t+1}
    int predict(const Model::ObsWindow& before, const Model::ObsWindow& after) const;

    Var logits(Tape& tape, const Model::Bound& enc_bound, Var head_w_var, Var head_b_var,
               const Model::ObsWindow& before, const Model::ObsWindow& after) const;

private:
    Model enc_;
    Tensor head_w_;  // [2R x A]
    Tensor head_b_;  // [A]
};

struct InverseResult {
    InverseModel model;
    double heldout_accuracy = 0.0;
};

InverseResult train_inverse_model(const DemoStore& labeled, const InverseConfig& icfg, const ModelConfig& mcfg);

// Argmax-labels every transition of an unlabeled store; marks records
// pseudo-labeled. Relabeling with the same model is a no-op.
DemoStore pseudo_label(const DemoStore& demos, const InverseModel& inv);

struct BcConfig {
    int epochs = 5;
    int batch = 64;
    uint64_t seed = 1;
    OptimConfig optim{.lr = 1e-3};
    int64_t epoch_transition_cap = 20000;
};

// Cross-entropy on actions through encode + policy head.
Model behavior_clone(const DemoStore& labeled, const BcConfig& bcfg, const ModelConfig& mcfg);

}  // namespace ldd
