#pragma once

// The gradient oracle suite: central finite differences against reverse
// mode for (a) every tape primitive, (b) the dynamics loss, (c) the
// actor-critic loss, (d) the full joint loss, each over many random
// configurations. Used by the grad-check CLI subcommand and the
// acceptance suite.

#include <string>
#include <vector>

namespace ldd {

struct OracleCaseResult {
    std::string name;
    double max_rel_err = 0.0;
    int64_t coords = 0;
    int configs = 0;
    double threshold = 1e-4;
    bool pass = false;
};

std::vector<OracleCaseResult> run_primitive_oracles(int configs_per_op, uint64_t seed);
OracleCaseResult run_dynamics_loss_oracle(int configs, uint64_t seed);
OracleCaseResult run_actor_critic_oracle(int configs, uint64_t seed);
OracleCaseResult run_joint_loss_oracle(int configs, uint64_t seed);

std::vector<OracleCaseResult> run_gradient_oracle_suite(int configs, uint64_t seed);

}  // namespace ldd
