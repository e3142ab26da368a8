#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hijacklab/dataset.hpp"
#include "hijacklab/mlp.hpp"

namespace hijacklab {

/// The model property the attacker wants the selection to maximize.
enum class HijackMetricKind { Generalization, Latency, Energy, L0Norm };

const char* metric_kind_name(HijackMetricKind kind);
HijackMetricKind metric_kind_from_name(const std::string& name);

/// Zero-skipping energy estimate: accelerators skip multiply-accumulates on
/// zero inputs, so energy is proportional to the MACs actually executed.
struct EnergyModel {
    double cost_per_mac = 1.0;
};

/// Validation loss on the clean hold-out set. Delegates to val_loss.
double generalization_metric(const MLPModel& model, const Dataset& clean_val);

struct LatencyResult {
    double wall_median_seconds = 0.0;  // noisy; excluded from determinism checks
    long long op_count_proxy = 0;      // deterministic MAC count surrogate
};

/// Wall time (median over `repeats` full-dataset forward passes) plus the
/// deterministic MAC-count proxy.
LatencyResult latency_metric(const MLPModel& model, const Dataset& data, int repeats);

/// Mean over samples of the strictly-positive activation count summed over
/// every ReLU layer.
double l0_metric(const MLPModel& model, const Dataset& data);

/// Mean over samples of cost_per_mac * sum over linear layers of
/// nnz(layer input) * fan_out; the first layer's input is the raw sample.
double energy_metric(const MLPModel& model, const Dataset& data, const EnergyModel& energy);

/// Per-model hijack-metric values and the normalized penalty weights used by
/// the poisoning loss: weight 0 for the max-metric model, 1 for the min.
struct MetricTable {
    HijackMetricKind kind = HijackMetricKind::Generalization;
    std::map<int, double> values;  // model id -> m(h, S^Val)
    std::map<int, double> alphas;  // model id -> weight in [0, 1]
};

/// alpha_c = (max_m - m_c) / (max_m - min_m). Throws ContractError on a
/// degenerate spread (all values equal within 1e-12).
std::map<int, double> alpha_from_values(const std::map<int, double>& values);

/// Hijack-metric value of one model on one dataset. Latency contributes its
/// deterministic MAC proxy so downstream artifacts stay reproducible.
double metric_value(HijackMetricKind kind, const MLPModel& model, const Dataset& data,
                    const EnergyModel& energy, int latency_repeats);

/// Values + alphas for a grid of models (>= 2, distinct ids) on the clean
/// validation set.
MetricTable compute_alpha_table(HijackMetricKind kind,
                                const std::vector<std::shared_ptr<MLPModel>>& models,
                                const Dataset& clean_val, const EnergyModel& energy,
                                int latency_repeats);

/// CSV round-trip: "# config_hash=..." provenance line, then
/// model_id,n_layers,n_neurons,lr,metric_kind,value,alpha.
void write_metric_table_csv(const std::filesystem::path& path, const MetricTable& table,
                            const std::vector<std::shared_ptr<MLPModel>>& models,
                            std::uint64_t config_hash);
MetricTable read_metric_table_csv(const std::filesystem::path& path);

/// Pearson correlation coefficient of two equally sized series.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace hijacklab
