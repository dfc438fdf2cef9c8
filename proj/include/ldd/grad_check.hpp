#pragma once

// Central finite-difference validation of reverse-mode gradients. The
// caller supplies the loss as a pair of closures over a shared parameter
// list: one that evaluates the loss at the current parameter values, one
// that evaluates it and returns gradients for every parameter.
//
// Relative error uses max(|analytic|, |numeric|, 1e-6) in the denominator
// so near-zero coordinates are compared on an absolute scale.

#include <functional>
#include <vector>

#include "ldd/tensor.hpp"

namespace ldd {

struct GradCheckSpec {
    double eps = 1e-5;
    double subsample = 0.05;  // fraction of coordinates probed per parameter set
    int min_coords = 50;
    uint64_t seed = 1;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
};

GradCheckResult grad_check(const std::vector<Tensor*>& params,
                           const std::function<double()>& loss_value,
                           const std::function<std::vector<Tensor>()>& loss_grads,
                           const GradCheckSpec& spec = {});

double relative_error(double analytic, double numeric);
double relative_error(double analytic, double numeric, double floor);

}  // namespace ldd
