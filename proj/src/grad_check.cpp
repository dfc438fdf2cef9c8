#include "ldd/grad_check.hpp"

#include <cmath>

#include "ldd/common.hpp"

namespace ldd {

double relative_error(double analytic, double numeric) { return relative_error(analytic, numeric, 1e-6); }

double relative_error(double analytic, double numeric, double floor) {
    double diff = std::fabs(analytic - numeric);
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return diff / denom;
}

GradCheckResult grad_check(const std::vector<Tensor*>& params,
                           const std::function<double()>& loss_value,
                           const std::function<std::vector<Tensor>()>& loss_grads,
                           const GradCheckSpec& spec) {
    std::vector<Tensor> analytic = loss_grads();
    if (analytic.size() != params.size())
        throw ShapeError("grad_check: gradient count mismatch");

    int64_t total = 0;
    for (const Tensor* p : params) total += p->size();
    int64_t want = static_cast<int64_t>(std::ceil(spec.subsample * static_cast<double>(total)));
    want = std::max<int64_t>(want, spec.min_coords);
    want = std::min(want, total);

    // sample coordinates without replacement over the flattened parameter list
    std::vector<int64_t> coords(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) coords[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(spec.seed, 0x67c0de));
    rng.shuffle(coords);
    coords.resize(static_cast<size_t>(want));

    // Central differences carry cancellation noise of order
    // machine_eps * |loss| / eps; coordinates whose gradient sits below that
    // scale are compared on an absolute scale instead of a relative one.
    double base = std::fabs(loss_value());
    double floor = std::max(1e-6, 1e-5 * base);

    GradCheckResult res;
    for (int64_t flat : coords) {
        size_t pi = 0;
        int64_t off = flat;
        while (off >= params[pi]->size()) {
            off -= params[pi]->size();
            ++pi;
        }
        Tensor& p = *params[pi];
        double orig = p[off];
        p[off] = orig + spec.eps;
        double lp = loss_value();
        p[off] = orig - spec.eps;
        double lm = loss_value();
        p[off] = orig;
        double numeric = (lp - lm) / (2.0 * spec.eps);
        double err = relative_error(analytic[pi][off], numeric, floor);
        res.max_rel_err = std::max(res.max_rel_err, err);
        ++res.coords_checked;
    }
    return res;
}

}  // namespace ldd
