#include "ldd/optim.hpp"

#include <cmath>

namespace ldd {

Optimizer::Optimizer(OptimConfig cfg, const std::vector<const Tensor*>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void Optimizer::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ShapeError("optimizer step: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(m_[i]))
            throw ShapeError("optimizer step: shape mismatch on parameter " + std::to_string(i) + ": " + params[i]->shape_str() + " vs " + m_[i].shape_str());
        if (!grads[i]->same_shape(m_[i]))
            throw ShapeError("optimizer step: gradient shape mismatch on parameter " + std::to_string(i));
        if (!grads[i]->all_finite())
            throw NumericError("optimizer step: non-finite gradient on parameter " + std::to_string(i));
    }
    ++t_;
    if (cfg_.kind == OptimKind::adam) {
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (int64_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    } else {
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            Tensor& v = v_[i];
            for (int64_t j = 0; j < p.size(); ++j) {
                v[j] = cfg_.alpha * v[j] + (1.0 - cfg_.alpha) * g[j] * g[j];
                p[j] -= cfg_.lr * g[j] / (std::sqrt(v[j]) + cfg_.eps);
            }
        }
    }
}

OptimKind optim_kind_from_string(const std::string& s) {
    if (s == "adam") return OptimKind::adam;
    if (s == "rmsprop") return OptimKind::rmsprop;
    throw ConfigError("unknown optimizer '" + s + "'");
}

std::string to_string(OptimKind k) { return k == OptimKind::adam ? "adam" : "rmsprop"; }

}  // namespace ldd
