#include "ldd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ldd {

static int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_size(shape_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("value count does not match shape " + ldd::shape_str(shape_));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

int Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
    return shape_[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
    return shape_[1];
}

double Tensor::scalar_value() const {
    if (size() != 1) throw ShapeError("scalar_value() on tensor of shape " + shape_str());
    return data_[0];
}

std::string Tensor::shape_str() const { return ldd::shape_str(shape_); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

uint64_t Tensor::content_hash() const {
    Fnv1a h;
    for (int d : shape_) h.update_pod(d);
    if (!data_.empty()) h.update(data_.data(), data_.size() * sizeof(double));
    return h.digest();
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace ldd
