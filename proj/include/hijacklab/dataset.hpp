#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hijacklab/tensor.hpp"

namespace hijacklab {

/// A labeled classification dataset: samples in [0,1], one integer label each.
struct Dataset {
    Tensor samples;             // [n x d]
    std::vector<int> labels;    // values in [0, n_classes)
    int n_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return samples.rank() == 2 ? samples.shape[1] : 0; }

    /// Rows selected by index, in the given order.
    Dataset subset(const std::vector<std::size_t>& indices) const;

    /// One sample as a [1 x d] matrix.
    Tensor row(std::size_t i) const;

    void validate() const;  // shape/label invariants; throws ContractError
};

/// Hold-out split fractions. Fractions must be positive and sum to 1.
struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
    bool stratified = false;
};

struct Splits {
    Dataset train, val, test;
};

/// Loads an IDX image/label file pair (the MNIST container format).
/// Pixels are scaled to [0,1] by /255. Validates both magics and the
/// image/label count agreement.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Gaussian blob benchmark: k clusters with distinct centers in [0.1,0.9]^d,
/// per-coordinate noise of the given spread, clipped to [0,1]. Labels are
/// assigned round-robin so classes stay balanced. Deterministic by seed.
Dataset synth_blobs(std::size_t n, std::size_t d, int k, double spread, std::uint64_t seed);

/// Disjoint, covering, seeded-shuffle partition. Sizes are floor-based for
/// val/test with the remainder going to train. Throws if any split is empty.
Splits split(const Dataset& data, const SplitSpec& spec);

/// Dataset binary round-trip ("MSHD" container, embeds seed + config hash).
void save_dataset(const std::filesystem::path& path, const Dataset& data, std::uint64_t seed,
                  std::uint64_t config_hash);
struct LoadedDataset {
    Dataset data;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};
LoadedDataset load_dataset(const std::filesystem::path& path);

}  // namespace hijacklab
