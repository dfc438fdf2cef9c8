#pragma once

// Phase 1: dynamics modeling on unlabeled demonstrations, plus the VAE
// pretraining baseline and held-out frame-prediction accuracy.

#include "ldd/demos.hpp"
#include "ldd/model.hpp"
#include "ldd/optim.hpp"

namespace ldd {

struct PretrainConfig {
    int epochs = 20;
    int batch = 64;                 // transitions per minibatch
    double eval_fraction = 0.1;
    int patience = 5;               // early stop on held-out accuracy
    uint64_t seed = 1;
    OptimConfig optim;
    int64_t epoch_transition_cap = 12000;  // 0 = full pass

    void validate() const;
};

struct PretrainReport {
    std::vector<double> train_loss;   // per epoch, mean J_delta
    std::vector<double> heldout_acc;  // per epoch
    int best_epoch = -1;
    double best_acc = 0.0;
    uint64_t demo_hash = 0;

    std::string to_csv() const;
};

struct TransitionPair {
    Model::ObsWindow window;   // frames ending at s_t
    const Observation* next;   // s_{t+1}
};

// Mean over the batch and the grid cells of cross-entropy between the
// dynamics head's per-cell distribution at s_t and the symbols of s_{t+1}.
Var dynamics_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                  const std::vector<TransitionPair>& batch);

struct PretrainResult {
    Model model;  // parameters at the best held-out accuracy epoch
    TeacherSnapshot teacher;
    PretrainReport report;
};

PretrainResult pretrain_dynamics(const DemoStore& store, const PretrainConfig& pcfg, const ModelConfig& mcfg);

// Fraction of (transition, cell) pairs whose argmax predicted symbol equals
// the true next symbol.
double eval_frame_accuracy(const Model& model, const DemoStore& heldout);

// Same metric for an arbitrary per-window grid predictor.
using GridPredictor = std::function<std::vector<uint8_t>(const Model::ObsWindow&)>;
double eval_frame_accuracy_fn(const GridPredictor& predict, const DemoStore& heldout, int frame_stack);

// KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over dimensions.
Var vae_kl(Tape& tape, Var mu, Var logvar);

struct VaeConfig {
    int epochs = 10;
    int batch = 64;
    double beta = 1.0;
    uint64_t seed = 1;
    OptimConfig optim;
    int64_t epoch_obs_cap = 12000;

    void validate() const;
};

// Trains the representation as a VAE encoder over single observations. The
// trunk output is the posterior mean; a linear head produces log-variance
// and a linear decoder reconstructs the grid. Decoder and log-variance
// head are discarded; the trained representation initializes the learner.
Model vae_pretrain(const DemoStore& store, const VaeConfig& vcfg, const ModelConfig& mcfg);

// Enumerate (window, next) pairs of a store; pointers into the store.
std::vector<TransitionPair> enumerate_transitions(const DemoStore& store, int frame_stack);

}  // namespace ldd
