#include "hijacklab/tensor.hpp"

#include <cmath>
#include <sstream>

#include "hijacklab/errors.hpp"

namespace hijacklab {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("Tensor: shape " + shape_str() + " does not match " +
                         std::to_string(data.size()) + " values");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() == 2) return shape[0];
    if (rank() == 1) return 1;
    throw ShapeError("Tensor::rows: not a matrix, shape " + shape_str());
}

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    throw ShapeError("Tensor::cols: not a matrix, shape " + shape_str());
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data[r * cols() + c];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor sample_gaussian(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.normal();
    return t;
}

}  // namespace hijacklab
