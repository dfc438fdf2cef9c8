#pragma once

// Adam and RMSProp. Moment buffers mirror the parameter list handed to the
// constructor; the same list (same order, same shapes) must be passed to
// every step() call.

#include <vector>

#include "ldd/tensor.hpp"

namespace ldd {

enum class OptimKind { adam, rmsprop };

struct OptimConfig {
    OptimKind kind = OptimKind::adam;
    double lr = 1e-4;
    // adam
    double beta1 = 0.99;
    double beta2 = 0.999;
    double eps = 1e-6;
    // rmsprop (eps added outside the square root, torch convention)
    double alpha = 0.99;
};

class Optimizer {
public:
    Optimizer(OptimConfig cfg, const std::vector<const Tensor*>& params);

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    int64_t step_count() const { return t_; }
    const OptimConfig& config() const { return cfg_; }
    const Tensor& moment1(size_t i) const { return m_[i]; }
    const Tensor& moment2(size_t i) const { return v_[i]; }

private:
    OptimConfig cfg_;
    std::vector<Tensor> m_;  // adam first moment (unused for rmsprop)
    std::vector<Tensor> v_;  // second moment / squared average
    int64_t t_ = 0;
};

OptimKind optim_kind_from_string(const std::string& s);
std::string to_string(OptimKind k);

}  // namespace ldd
