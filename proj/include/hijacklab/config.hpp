#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hijacklab/dataset.hpp"
#include "hijacklab/hvae.hpp"
#include "hijacklab/metrics.hpp"
#include "hijacklab/mlp.hpp"
#include "hijacklab/selection.hpp"

namespace hijacklab {

/// Where the benchmark data comes from: the synthetic blob generator or an
/// IDX image/label file pair.
struct DatasetSpec {
    std::string kind = "synth_blobs";  // "synth_blobs" | "idx"
    std::uint64_t n = 512;
    std::uint64_t dim = 16;
    int classes = 4;
    double spread = 0.05;
    std::uint64_t seed = 11;
    std::string images;  // idx only
    std::string labels;  // idx only
};

/// Base seeds for the independent random streams of the pipeline.
struct SeedSpec {
    std::uint64_t victims = 100;
    std::uint64_t surrogates = 200;
    std::uint64_t hvae = 300;
    std::uint64_t substitution = 400;
};

/// The single JSON document that drives every pipeline stage.
struct ExperimentConfig {
    DatasetSpec dataset;
    SplitSpec split{0.8, 0.1, 0.1, 12, false};
    HyperSpace space{{1, 2, 3}, {8, 16}, {0.5, 0.005}};
    TrainOptions training{15, 32};
    std::vector<Grouping> groupings{Grouping::Global, Grouping::ByLr,
                                    Grouping::ByLrAndNeurons};
    std::vector<HijackMetricKind> metrics{
        HijackMetricKind::Generalization, HijackMetricKind::Latency, HijackMetricKind::Energy,
        HijackMetricKind::L0Norm};
    std::vector<Knowledge> knowledge{Knowledge::WhiteBox, Knowledge::BlackBox};
    std::vector<double> rates{0.1, 0.2, 0.5, 0.8, 1.0};
    HVAEConfig hvae{8, {32}, ReconKind::BCE, 0.01, 20, 32, 0};
    SeedSpec seeds;
    int latency_repeats = 3;
    double energy_cost_per_mac = 1.0;
    std::string output_dir = "out";

    static ExperimentConfig from_json(const nlohmann::ordered_json& j);
    static ExperimentConfig from_json_file(const std::filesystem::path& path);
    nlohmann::ordered_json to_json(bool include_output_dir = true) const;

    /// Field-level validation; throws ConfigError with one line per problem.
    void validate() const;

    /// Hash over the semantic fields (output directory excluded), recorded
    /// in every artifact this config produces.
    std::uint64_t hash() const;

    /// Rederives every stream seed from one master seed (CLI --seed).
    void override_seeds(std::uint64_t master);
};

}  // namespace hijacklab
