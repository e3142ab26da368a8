#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hijacklab/dataset.hpp"
#include "hijacklab/metrics.hpp"
#include "hijacklab/mlp.hpp"
#include "hijacklab/tape.hpp"

namespace hijacklab {

enum class ReconKind { BCE, MSE };

const char* recon_kind_name(ReconKind kind);
ReconKind recon_kind_from_name(const std::string& name);

struct HVAEConfig {
    int latent_dim = 16;
    std::vector<int> hidden = {64};  // shared by encoder and decoder
    ReconKind recon = ReconKind::BCE;
    double learning_rate = 1e-3;
    int epochs = 30;
    int batch_size = 64;
    std::uint64_t seed = 0;

    std::uint64_t hash() const;
};

/// The three loss terms and the squared objective they combine into:
/// total = (l_rec + l_kld - hj_cost)^2.
struct LossBreakdown {
    double l_rec = 0.0;
    double l_kld = 0.0;
    double hj_cost = 0.0;
    double total = 0.0;
};

/// Samples decoded from Gaussian noise with their conditioning labels.
struct GenBatch {
    Tensor samples;           // [n x input_dim]
    std::vector<int> labels;  // the labels that conditioned the decoder
};

struct PoisonProvenance {
    std::uint64_t config_hash = 0;  // HVAE config hash
    std::uint64_t seed = 0;
    std::string grid_id;
    HijackMetricKind metric = HijackMetricKind::Generalization;
};

/// The crafted substitute validation set plus how it was produced.
struct PoisonSet {
    Tensor samples;
    std::vector<int> labels;
    int n_classes = 0;
    PoisonProvenance provenance;

    std::size_t size() const { return labels.size(); }
};

/// Conditional VAE trained to emit validation samples that penalize victim
/// models in proportion to their penalty weight. The encoder consumes
/// (x ++ onehot(y)) and emits a Gaussian posterior; the decoder consumes
/// (z ++ onehot(y)) and emits a sample (through a sigmoid when the
/// reconstruction loss is BCE).
class HVAEModel {
public:
    HVAEModel(HVAEConfig config, int input_dim, int n_classes);

    const HVAEConfig& config() const { return config_; }
    int input_dim() const { return input_dim_; }
    int n_classes() const { return n_classes_; }
    std::vector<Parameter*> parameters();

    struct EncodeResult {
        Tensor mu;
        Tensor logvar;
    };
    EncodeResult encode(const Tensor& x, const std::vector<int>& labels) const;
    /// Decodes latent rows under the given labels; sigmoid applied for BCE.
    Tensor decode(const Tensor& z, const std::vector<int>& labels) const;

    /// Tape builders used by the training loss. The decoder output here is
    /// pre-sigmoid under BCE (the loss consumes logits directly).
    struct TapeEncode {
        Value mu;
        Value logvar;
    };
    TapeEncode encode_on_tape(Tape& tape, Value x_with_labels);
    Value decode_logits_on_tape(Tape& tape, Value z_with_labels);

    std::vector<DenseLayer>& encoder_hidden() { return enc_hidden_; }
    DenseLayer& mu_head() { return mu_head_; }
    DenseLayer& logvar_head() { return logvar_head_; }
    std::vector<DenseLayer>& decoder_hidden() { return dec_hidden_; }
    DenseLayer& output_layer() { return out_layer_; }
    const std::vector<DenseLayer>& encoder_hidden() const { return enc_hidden_; }
    const DenseLayer& mu_head() const { return mu_head_; }
    const DenseLayer& logvar_head() const { return logvar_head_; }
    const std::vector<DenseLayer>& decoder_hidden() const { return dec_hidden_; }
    const DenseLayer& output_layer() const { return out_layer_; }

private:
    HVAEConfig config_;
    int input_dim_;
    int n_classes_;
    std::vector<DenseLayer> enc_hidden_;
    DenseLayer mu_head_, logvar_head_;
    std::vector<DenseLayer> dec_hidden_;
    DenseLayer out_layer_;
};

/// One-hot label matrix [n x n_classes].
Tensor onehot(const std::vector<int>& labels, int n_classes);

/// Pre-drawn randomness for one loss evaluation, for gradient audits that
/// must hold the noise fixed across re-evaluations.
struct HvaeNoise {
    Tensor encoder_eps;           // [batch x latent]
    Tensor gen_latent;            // [gen batch x latent]
    std::vector<int> gen_labels;  // uniform conditioning labels
};

/// Draws the randomness for one loss evaluation: reparameterization noise,
/// generation latents (same size as the batch) and uniform labels.
HvaeNoise draw_hvae_noise(const HVAEModel& hvae, std::size_t batch_size, Rng& rng);

/// One full forward evaluation of the training objective.
struct HvaeForward {
    Tape tape;
    Value total;
    LossBreakdown parts;
    GenBatch generated;
};

/// Builds the complete objective on a fresh tape:
///   l_rec   reconstruction of the batch (sum over features, mean per batch)
///   l_kld   Gaussian KL of the posterior, mean per batch
///   hj_cost penalty-weighted mean validation loss of the frozen attack
///           models on a freshly generated batch
///   total = (l_rec + l_kld - hj_cost)^2
/// Gradients flow into encoder and decoder parameters only; the attack
/// models enter as constants.
HvaeForward hvae_forward_loss(HVAEModel& hvae, const Tensor& batch_x,
                              const std::vector<int>& batch_y, const MetricTable& alpha_table,
                              const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                              const HvaeNoise& noise);
HvaeForward hvae_forward_loss(HVAEModel& hvae, const Tensor& batch_x,
                              const std::vector<int>& batch_y, const MetricTable& alpha_table,
                              const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                              Rng& rng);

/// SGD over the squared objective. Returns one mean LossBreakdown per epoch;
/// deterministic given the rng state. Attack models are never touched.
std::vector<LossBreakdown> train_hvae(HVAEModel& hvae, const Dataset& train,
                                      const MetricTable& alpha_table,
                                      const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                                      int epochs, int batch_size, Rng& rng);

/// Decodes n samples from Gaussian noise with uniformly drawn labels.
PoisonSet generate_poison(const HVAEModel& hvae, std::size_t n, Rng& rng,
                          PoisonProvenance provenance = {});

/// Mean reconstruction loss over a dataset with the posterior mean as the
/// latent (no sampling); used to track generative quality.
double mean_recon_loss(const HVAEModel& hvae, const Dataset& data);

/// HVAE binary container ("MSHV"); bit-exact round-trip.
void save_hvae(const std::filesystem::path& path, const HVAEModel& hvae,
               std::uint64_t config_hash);
struct LoadedHvae {
    std::shared_ptr<HVAEModel> model;
    std::uint64_t config_hash = 0;
};
LoadedHvae load_hvae(const std::filesystem::path& path);

/// Poison set binary container ("MSHP"); bit-exact round-trip.
void save_poison(const std::filesystem::path& path, const PoisonSet& poison);
PoisonSet load_poison(const std::filesystem::path& path);

}  // namespace hijacklab
