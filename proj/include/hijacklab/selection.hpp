#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hijacklab/dataset.hpp"
#include "hijacklab/hvae.hpp"
#include "hijacklab/metrics.hpp"
#include "hijacklab/mlp.hpp"

namespace hijacklab {

enum class Knowledge { WhiteBox, BlackBox };

const char* knowledge_name(Knowledge k);
Knowledge knowledge_from_name(const std::string& name);

/// Outcome of hold-out selection over one grid.
struct SelectionResult {
    int selected_id = -1;
    std::map<int, double> losses;  // model id -> mean validation loss
    std::string set_kind;          // "clean" or "poisoned(rate)"
};

/// argmin of the validation loss over the grid; ties go to the lowest
/// model id so selection is deterministic.
SelectionResult select_model(const ModelGrid& grid, const Dataset& validation,
                             const std::string& set_kind = "clean");

/// Replaces floor(rate * |clean|) uniformly chosen clean samples with the
/// first k poison samples, preserving the set size. Deterministic given the
/// generator state.
Dataset substitute_at_rate(const Dataset& clean, const PoisonSet& poison, double rate, Rng& rng);

/// Normalized selection-shift score:
///   (E(hijacked) - E(legit)) / (max_c E(c) - E(legit)).
/// Zero when the selection did not move; the undefined flag is set when the
/// legitimate model already attains the grid maximum.
struct EsfResult {
    bool undefined_legit_is_max = false;
    double value = 0.0;
};
EsfResult esf(const std::map<int, double>& eval_values, int legit_id, int hijacked_id);

/// 1 if the attack strictly increased the eval metric.
int asr(double esf_value);

/// E(hijacked) / E(legit) on the test set; requires E(legit) > 0.
double impact_factor(const std::map<int, double>& eval_values, int legit_id, int hijacked_id);

/// One attack-matrix cell: a grid at some granularity, one hijack metric,
/// one knowledge level, one substitution rate.
struct AttackReport {
    std::string grid_id;  // "global" or the group key
    Grouping grouping = Grouping::Global;
    HijackMetricKind metric = HijackMetricKind::Generalization;
    Knowledge knowledge = Knowledge::WhiteBox;
    double rate = 1.0;
    int legit_id = -1;
    int hijacked_id = -1;
    bool esf_undefined = false;
    double esf_value = 0.0;
    int asr_value = 0;
    double impact = 0.0;
    std::map<int, double> eval_values;  // model id -> E(h, S^Test)
    std::string error;                  // non-empty when the cell failed
};

/// Everything one attack set needs: the victim grid the selection runs on,
/// the grid the attacker actually has (victims in white-box, surrogate twins
/// in black-box), and the data splits.
struct AttackSetInputs {
    Knowledge knowledge = Knowledge::WhiteBox;
    const ModelGrid* victim_grid = nullptr;
    const ModelGrid* attack_grid = nullptr;
    HijackMetricKind metric = HijackMetricKind::Generalization;
    const Dataset* s_train = nullptr;
    const Dataset* s_val = nullptr;
    HVAEConfig hvae_config;  // seed must already be set per set
    EnergyModel energy;
    int latency_repeats = 5;
};

struct CraftResult {
    MetricTable table;
    std::shared_ptr<HVAEModel> hvae;
    PoisonSet poison;  // |S^Val| samples
    std::vector<LossBreakdown> log;
};

/// Trains the per-set HVAE against the attack grid's alpha table and decodes
/// a full-substitution poison candidate set.
CraftResult craft_attack_set(const AttackSetInputs& inputs);

/// Per-model eval-metric values E(h, S^Test) for the victim grid.
std::map<int, double> eval_metric_values(const ModelGrid& grid, HijackMetricKind metric,
                                         const Dataset& s_test, const EnergyModel& energy,
                                         int latency_repeats);

/// Runs selection on the rate-substituted validation set and scores the
/// shift against the clean selection.
AttackReport evaluate_cell(const ModelGrid& victim_grid, const Dataset& s_val_clean,
                           const PoisonSet& poison, double rate, std::uint64_t subst_seed,
                           const std::map<int, double>& eval_values, HijackMetricKind metric,
                           Knowledge knowledge);

struct MatrixInputs {
    std::vector<std::shared_ptr<MLPModel>> victims;
    std::vector<std::shared_ptr<MLPModel>> surrogates;  // required for black-box cells
    Dataset s_train, s_val, s_test;
    std::vector<Grouping> groupings;
    std::vector<HijackMetricKind> metrics;
    std::vector<Knowledge> knowledges;
    std::vector<double> rates;
    HVAEConfig hvae_config;
    EnergyModel energy;
    int latency_repeats = 5;
    std::uint64_t hvae_seed_base = 0;
    std::uint64_t substitution_seed_base = 0;
    int jobs = 1;
};

/// The full evaluation matrix: one report per (grid, metric, knowledge,
/// rate). Cells fail independently (the error lands in the report) and the
/// output order is the canonical nested loop order regardless of jobs.
std::vector<AttackReport> run_attack_matrix(const MatrixInputs& inputs);

/// Stable per-set key, also the seed-derivation string:
/// "<knowledge>|<grouping>|<grid_id>|<metric>".
std::string attack_set_key(Knowledge knowledge, Grouping grouping, const std::string& grid_id,
                           HijackMetricKind metric);

/// Aggregated success rates in the style of the result tables: percentage of
/// sets with ASR == 1 per (grouping, metric, knowledge, rate).
struct AggregateEntry {
    Grouping grouping = Grouping::Global;
    HijackMetricKind metric = HijackMetricKind::Generalization;
    Knowledge knowledge = Knowledge::WhiteBox;
    double rate = 1.0;
    int n_sets = 0;
    int n_defined = 0;  // cells with a defined ESF and no error
    int n_success = 0;
    double asr_percent = 0.0;  // 100 * n_success / n_defined
    double mean_esf = 0.0;     // over defined cells
};
std::vector<AggregateEntry> aggregate_reports(const std::vector<AttackReport>& reports);

/// CSV round-trip for reports (the eval_values map is not serialized):
/// grid_id,grouping,metric,knowledge,rate,legit_id,hijacked_id,esf,asr,impact.
void write_attack_reports_csv(const std::filesystem::path& path,
                              const std::vector<AttackReport>& reports,
                              std::uint64_t config_hash);
std::vector<AttackReport> read_attack_reports_csv(const std::filesystem::path& path);

}  // namespace hijacklab
