#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hijacklab/config.hpp"

namespace hijacklab {

struct StageOutcome {
    std::string stage;
    bool skipped = false;  // outputs already up to date for this config
    std::vector<std::string> outputs;
};

/// Stage-by-stage experiment runner. Every stage is idempotent: it writes a
/// manifest keyed by the config hash and is skipped when the manifest and
/// all outputs are already present for the same hash. All binary artifacts
/// and CSVs are deterministic except flagged wall-clock columns.
class Pipeline {
public:
    Pipeline(ExperimentConfig config, std::filesystem::path outdir, int jobs = 1);

    const ExperimentConfig& config() const { return config_; }
    const std::filesystem::path& outdir() const { return outdir_; }

    StageOutcome gen_data();
    StageOutcome train_grid();
    StageOutcome metrics();
    StageOutcome train_hvae();
    StageOutcome attack();
    StageOutcome report();
    std::vector<StageOutcome> run_all();

    /// Filesystem layout helpers (paths relative to the output directory).
    std::filesystem::path dataset_path() const;
    std::filesystem::path model_path(const std::string& role, int id) const;
    std::filesystem::path metric_table_path(Knowledge k, Grouping g, const std::string& grid_id,
                                            HijackMetricKind m) const;
    std::filesystem::path hvae_path(Knowledge k, Grouping g, const std::string& grid_id,
                                    HijackMetricKind m) const;
    std::filesystem::path poison_path(Knowledge k, Grouping g, const std::string& grid_id,
                                      HijackMetricKind m) const;

private:
    struct LoadedModels {
        std::vector<std::shared_ptr<MLPModel>> victims;
        std::vector<std::shared_ptr<MLPModel>> surrogates;
    };

    bool up_to_date(const std::string& stage) const;
    void write_manifest(const std::string& stage, const std::vector<std::string>& outputs);
    void require_stage(const std::string& stage, const std::string& command) const;

    Dataset load_data() const;
    Splits load_splits() const;
    LoadedModels load_models() const;
    bool wants_black_box() const;

    ExperimentConfig config_;
    std::filesystem::path outdir_;
    int jobs_;
    std::uint64_t hash_;
};

/// Nondeterministic columns, by file name; the determinism contract for
/// run-all excludes exactly these (wall-clock measurements).
const std::vector<std::string>& nondeterministic_columns(const std::string& filename);

}  // namespace hijacklab
