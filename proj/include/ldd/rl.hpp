#pragma once

// Phase 2: synchronous advantage actor-critic over round-robin environment
// instances, with the distillation term and the baseline variants. A
// single learner thread owns the parameters; acceptance runs use this
// deterministic mode exclusively.

#include <filesystem>

#include "ldd/demos.hpp"
#include "ldd/model.hpp"
#include "ldd/optim.hpp"

namespace ldd {

enum class Variant {
    scratch,
    vae,
    ldd,
    ldd_minus_init,
    ldd_minus_distill,
    reward_shaping,
    inverse,
};
Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct LossWeights {
    double alpha_v = 0.5;   // critic weight
    double alpha_d = 1.0;   // distillation weight
    double entropy = 0.05;  // entropy bonus weight

    void validate() const;
};

struct TrainConfig {
    Variant variant = Variant::scratch;
    int64_t total_frames = 2000000;
    int n_actors = 4;
    int unroll = 16;
    uint64_t seed = 1;
    OptimConfig optim;
    LossWeights weights;
    int64_t eval_cadence = 50000;
    int eval_episodes = 100;
    int64_t checkpoint_cadence = 500000;
    double shaping_lambda = 0.1;        // reward_shaping only
    std::string alpha_d_anneal = "none";  // none | linear (to zero over total_frames)
    std::string distill_norm = "mean_sq";

    void validate() const;
};

// Backward recursion G_t = r_{t+1} + gamma * G_{t+1}; the value after the
// truncation point is bootstrap_value, and done steps reset the recursion.
std::vector<double> compute_returns(const std::vector<double>& rewards,
                                    const std::vector<uint8_t>& dones,
                                    double gamma, double bootstrap_value);

// On-policy rollout segment; values and log-probs are recomputed under the
// current parameters inside the loss.
struct RolloutBatch {
    std::vector<Model::ObsWindow> windows;  // s_t
    std::vector<int> actions;               // a_t
    std::vector<double> rewards;            // r_{t+1}
    std::vector<uint8_t> dones;
    double bootstrap_value = 0.0;
    double gamma = 0.99;
    // The advantage (G - V) is detached; finite-difference oracles must hold
    // it fixed at the base point or they would differentiate through the
    // stop-gradient. Training never sets this.
    std::optional<std::vector<double>> frozen_advantages;
};

struct LossBreakdown {
    Var total;
    double j_pi = 0.0;
    double j_v = 0.0;
    double entropy = 0.0;
    double j_d = 0.0;
    double total_value = 0.0;
};

// total = -J_pi + alpha_v * J_V - entropy_w * H, with the advantage
// (G - V) detached in the policy term.
LossBreakdown actor_critic_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                                const RolloutBatch& batch, const LossWeights& w);

// actor-critic total + alpha_d * J_d over the batch's observations. With
// alpha_d == 0 or no teacher the op sequence is identical to
// actor_critic_loss, so results match bitwise.
LossBreakdown joint_loss(Tape& tape, const Model& model, const Model::Bound& bound,
                         const RolloutBatch& batch, const TeacherSnapshot* teacher,
                         const LossWeights& w, const std::string& distill_norm = "mean_sq");

// Auxiliary shaped reward: -lambda * (1 - per-cell accuracy of the teacher's
// next-frame prediction). Zero when the teacher predicts s_{t+1} exactly.
double reward_shaping_penalty(const TeacherSnapshot& teacher, const Model::ObsWindow& before,
                              const Observation& after, double lambda);

struct TrainArtifacts {
    const TeacherSnapshot* teacher = nullptr;
    const Model* init_params = nullptr;  // vae / inverse initialization
};

struct TrainResult {
    double final_train_win = 0.0;
    double final_eval_win = 0.0;
    int64_t frames_to_90_train = -1;  // -1: threshold never reached
    double first_update_jd = 0.0;
    int64_t episodes = 0;
    std::filesystem::path metrics_path;
    std::filesystem::path checkpoint_path;
};

TrainResult train(const TrainConfig& tcfg, const EpisodeConfig& ecfg, const SplitSpec& split,
                  const ModelConfig& mcfg, const TrainArtifacts& artifacts,
                  const std::filesystem::path& out_dir);

// Greedy evaluation (argmax policy, lowest action index on ties).
double evaluate_win_rate(const Model& model, const EpisodeConfig& ecfg, const SplitSpec& split,
                         Side side, int episodes, uint64_t seed_base);

const char* metrics_csv_header();

}  // namespace ldd
