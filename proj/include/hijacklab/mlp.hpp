#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hijacklab/dataset.hpp"
#include "hijacklab/tape.hpp"

namespace hijacklab {

/// One victim hyperparameter point: depth, shared hidden width, SGD step
/// size, and the seed that makes the model reproducible.
struct HyperConfig {
    int n_layers = 1;       // hidden ReLU layers; the linear output layer is extra
    int n_neurons = 8;      // width of every hidden layer
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
};

struct DenseLayer {
    Parameter weight;  // [in x out]
    Parameter bias;    // [out]
};

/// Feedforward classifier: n_layers ReLU blocks of uniform width followed by
/// a linear layer producing logits. Weights use uniform Glorot init drawn
/// from the config seed, so construction is bit-reproducible.
class MLPModel {
public:
    MLPModel(HyperConfig config, int input_dim, int n_classes, int model_id = -1);

    const HyperConfig& config() const { return config_; }
    int input_dim() const { return input_dim_; }
    int n_classes() const { return n_classes_; }
    int id() const { return model_id_; }
    void set_id(int id) { model_id_ = id; }

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<Parameter*> parameters();

    /// Logits for a batch [n x d] -> [n x k].
    Tensor forward(const Tensor& x) const;

    struct ForwardTrace {
        Tensor logits;
        std::vector<Tensor> hidden;             // post-ReLU activations per layer
        std::vector<std::size_t> relu_counts;   // strictly-positive entries per layer
    };
    /// Same logits as forward(), plus per-ReLU-layer activation records.
    ForwardTrace forward_with_activations(const Tensor& x) const;

    /// Builds the forward pass on a tape with this model's parameters
    /// registered as trainable leaves.
    Value forward_on_tape(Tape& tape, Value x);

    /// Builds the forward pass with the weights captured as constants;
    /// backward will not produce gradients for this model.
    Value forward_frozen(Tape& tape, Value x) const;

    /// Total multiply-accumulates of one forward pass of a single sample.
    long long macs_per_sample() const;

private:
    void check_input(const Tensor& x) const;

    HyperConfig config_;
    int input_dim_;
    int n_classes_;
    int model_id_;
    std::vector<DenseLayer> layers_;
};

/// Mean softmax cross-entropy of a model over a dataset. The hold-out
/// selection loss; always >= 0.
double val_loss(const MLPModel& model, const Dataset& data);

/// Mean softmax cross-entropy of precomputed logits against labels.
double softmax_ce_mean(const Tensor& logits, const std::vector<int>& labels);

struct HyperSpace {
    std::vector<int> layers;
    std::vector<int> neurons;
    std::vector<double> learning_rates;
};

enum class Grouping { Global, ByLr, ByLrAndNeurons };

const char* grouping_name(Grouping g);
Grouping grouping_from_name(const std::string& name);

/// One attack set: the models the selection runs over, at some granularity.
struct ModelGrid {
    Grouping grouping = Grouping::Global;
    std::string group_key;  // "" | "lr=..." | "lr=...;neurons=..."
    std::vector<std::shared_ptr<MLPModel>> models;
};

/// Materializes the full hyperparameter cross product in canonical order
/// (layers, then neurons, then learning rate). Model ids follow that order
/// and each model's seed is base_seed mixed with its id, so two calls build
/// identical models and disjoint base seeds give disjoint streams.
std::vector<std::shared_ptr<MLPModel>> build_model_space(const HyperSpace& space, int input_dim,
                                                         int n_classes, std::uint64_t base_seed);

/// Groups existing models into grids at the requested granularity.
std::vector<ModelGrid> partition_grid(const std::vector<std::shared_ptr<MLPModel>>& models,
                                      Grouping grouping);

/// build_model_space + partition_grid in one step.
std::vector<ModelGrid> build_grid(const HyperSpace& space, Grouping grouping, int input_dim,
                                  int n_classes, std::uint64_t base_seed);

struct TrainOptions {
    int epochs = 20;
    int batch_size = 64;
};

struct TrainReport {
    HyperConfig config;
    double final_train_loss = 0.0;
    int epochs = 0;
    double wall_seconds = 0.0;
};

/// Mini-batch SGD on softmax cross-entropy. Deterministic given the rng
/// state; aborts with a NumericError naming the epoch/batch if the loss
/// leaves the finite range.
TrainReport train_model(MLPModel& model, const Dataset& train, const TrainOptions& options,
                        Rng& rng);

/// Flat binary model container ("MSHJ"); bit-exact round-trip.
void save_model(const std::filesystem::path& path, const MLPModel& model);
std::shared_ptr<MLPModel> load_model(const std::filesystem::path& path);

}  // namespace hijacklab
