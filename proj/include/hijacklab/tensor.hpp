#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hijacklab/rng.hpp"

namespace hijacklab {

/// Dense row-major tensor of 64-bit floats.
///
/// The shape may have any rank; the training stack only ever builds scalars
/// (shape {1} or {}), vectors and matrices. product(shape) == data.size()
/// always holds.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v);
    /// 1-D tensor from values.
    static Tensor vec(std::vector<double> values);
    /// 2-D tensor from row-major values.
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return numel() == 1; }
    std::size_t rank() const { return shape.size(); }

    /// Rows/cols of a rank-2 tensor (rank-1 counts as a single row).
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool all_finite() const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    /// "[2x3]" style shape description for error messages.
    std::string shape_str() const;
};

/// product(shape), 1 for rank-0.
std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// i.i.d. standard normal tensor, deterministic given the generator state.
Tensor sample_gaussian(const std::vector<std::size_t>& shape, Rng& rng);

}  // namespace hijacklab
