#include "hijacklab/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/parallel.hpp"
#include "hijacklab/rng.hpp"

namespace hijacklab {

namespace {

constexpr std::uint64_t kTrainStream = 0x7472;  // "tr"

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return out;
}

std::string set_file_stem(Knowledge k, Grouping g, const std::string& grid_id,
                          HijackMetricKind m) {
    const char* kn = k == Knowledge::WhiteBox ? "wb" : "bb";
    return std::string(kn) + "_" + grouping_name(g) + "_" + sanitize(grid_id) + "_" +
           metric_kind_name(m);
}

struct SetRef {
    Knowledge knowledge;
    Grouping grouping;
    std::string grid_id;
    HijackMetricKind metric;
    std::size_t grid_index;  // within the grouping's grid list
};

std::vector<SetRef> enumerate_sets(const ExperimentConfig& cfg,
                                   const std::vector<std::shared_ptr<MLPModel>>& victims) {
    std::vector<SetRef> sets;
    for (Knowledge k : cfg.knowledge)
        for (Grouping g : cfg.groupings) {
            const auto grids = partition_grid(victims, g);
            for (std::size_t gi = 0; gi < grids.size(); ++gi) {
                const std::string grid_id =
                    grids[gi].group_key.empty() ? "global" : grids[gi].group_key;
                for (HijackMetricKind m : cfg.metrics)
                    sets.push_back(SetRef{k, g, grid_id, m, gi});
            }
        }
    return sets;
}

/// model_metrics.csv schema; the wall columns are flagged nondeterministic.
const std::vector<std::string> kModelMetricsHeader = {
    "model_id",     "role",       "n_layers",    "n_neurons",    "lr",
    "seed",         "val_loss",   "test_loss",   "l0_val",       "l0_test",
    "energy_val",   "energy_test", "opproxy_val", "opproxy_test",
    "wall_val_seconds", "wall_test_seconds"};

const std::vector<std::string> kTrainReportHeader = {
    "model_id", "role", "n_layers", "n_neurons", "lr",
    "seed",     "final_train_loss", "epochs", "wall_seconds"};

}  // namespace

const std::vector<std::string>& nondeterministic_columns(const std::string& filename) {
    static const std::vector<std::string> kTrain = {"wall_seconds"};
    static const std::vector<std::string> kMetrics = {"wall_val_seconds", "wall_test_seconds"};
    static const std::vector<std::string> kNone;
    if (filename == "train_reports.csv") return kTrain;
    if (filename == "model_metrics.csv") return kMetrics;
    return kNone;
}

Pipeline::Pipeline(ExperimentConfig config, std::filesystem::path outdir, int jobs)
    : config_(std::move(config)), outdir_(std::move(outdir)), jobs_(std::max(1, jobs)),
      hash_(config_.hash()) {
    config_.validate();
}

std::filesystem::path Pipeline::dataset_path() const {
    return outdir_ / "dataset.bin";
}

std::filesystem::path Pipeline::model_path(const std::string& role, int id) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", id);
    return outdir_ / "models" / (role + "_" + buf + ".bin");
}

std::filesystem::path Pipeline::metric_table_path(Knowledge k, Grouping g,
                                                  const std::string& grid_id,
                                                  HijackMetricKind m) const {
    return outdir_ / "metric_tables" / (set_file_stem(k, g, grid_id, m) + ".csv");
}

std::filesystem::path Pipeline::hvae_path(Knowledge k, Grouping g, const std::string& grid_id,
                                          HijackMetricKind m) const {
    return outdir_ / "hvae" / (set_file_stem(k, g, grid_id, m) + ".bin");
}

std::filesystem::path Pipeline::poison_path(Knowledge k, Grouping g, const std::string& grid_id,
                                            HijackMetricKind m) const {
    return outdir_ / "poison" / (set_file_stem(k, g, grid_id, m) + ".bin");
}

bool Pipeline::up_to_date(const std::string& stage) const {
    const std::filesystem::path manifest = outdir_ / "manifests" / (stage + ".json");
    if (!std::filesystem::exists(manifest)) return false;
    try {
        nlohmann::ordered_json j;
        std::ifstream in(manifest);
        in >> j;
        if (j.value("config_hash", std::string()) != hex64(hash_)) return false;
        for (const auto& rel : j.at("outputs"))
            if (!std::filesystem::exists(outdir_ / rel.get<std::string>())) return false;
        return true;
    } catch (...) {
        return false;
    }
}

void Pipeline::write_manifest(const std::string& stage,
                              const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["config_hash"] = hex64(hash_);
    j["outputs"] = outputs;
    io::atomic_write(outdir_ / "manifests" / (stage + ".json"), j.dump(2) + "\n");
}

void Pipeline::require_stage(const std::string& stage, const std::string& command) const {
    if (!up_to_date(stage))
        throw ContractError("missing or stale artifacts from stage '" + stage +
                            "'; run `hijacklab " + command + "` first");
}

bool Pipeline::wants_black_box() const {
    return std::find(config_.knowledge.begin(), config_.knowledge.end(),
                     Knowledge::BlackBox) != config_.knowledge.end();
}

Dataset Pipeline::load_data() const {
    return load_dataset(dataset_path()).data;
}

Splits Pipeline::load_splits() const {
    return split(load_data(), config_.split);
}

Pipeline::LoadedModels Pipeline::load_models() const {
    LoadedModels out;
    const std::size_t count = config_.space.layers.size() * config_.space.neurons.size() *
                              config_.space.learning_rates.size();
    for (std::size_t id = 0; id < count; ++id) {
        auto m = load_model(model_path("victim", static_cast<int>(id)));
        m->set_id(static_cast<int>(id));
        out.victims.push_back(std::move(m));
    }
    if (wants_black_box()) {
        for (std::size_t id = 0; id < count; ++id) {
            auto m = load_model(model_path("surrogate", static_cast<int>(id)));
            m->set_id(static_cast<int>(id));
            out.surrogates.push_back(std::move(m));
        }
    }
    return out;
}

StageOutcome Pipeline::gen_data() {
    StageOutcome outcome{"gen-data", false, {"dataset.bin"}};
    if (up_to_date("gen-data")) {
        outcome.skipped = true;
        return outcome;
    }
    Dataset data;
    std::uint64_t seed = 0;
    if (config_.dataset.kind == "synth_blobs") {
        seed = config_.dataset.seed;
        data = synth_blobs(config_.dataset.n, config_.dataset.dim, config_.dataset.classes,
                           config_.dataset.spread, seed);
    } else {
        data = load_idx(config_.dataset.images, config_.dataset.labels);
    }
    save_dataset(dataset_path(), data, seed, hash_);
    write_manifest("gen-data", outcome.outputs);
    return outcome;
}

StageOutcome Pipeline::train_grid() {
    require_stage("gen-data", "gen-data");
    StageOutcome outcome{"train-grid", false, {}};
    if (up_to_date("train-grid")) {
        outcome.skipped = true;
        return outcome;
    }

    const Splits splits = load_splits();
    const bool with_surrogates = wants_black_box();

    struct Job {
        std::string role;
        std::shared_ptr<MLPModel> model;
        TrainReport report;
    };
    std::vector<Job> jobs;
    for (const auto& m :
         build_model_space(config_.space, static_cast<int>(splits.train.dim()),
                           splits.train.n_classes, config_.seeds.victims))
        jobs.push_back(Job{"victim", m, {}});
    if (with_surrogates)
        for (const auto& m :
             build_model_space(config_.space, static_cast<int>(splits.train.dim()),
                               splits.train.n_classes, config_.seeds.surrogates))
            jobs.push_back(Job{"surrogate", m, {}});

    parallel_for(jobs.size(), jobs_, [&](std::size_t i) {
        Rng rng(mix_seed(jobs[i].model->config().seed, kTrainStream));
        jobs[i].report = train_model(*jobs[i].model, splits.train, config_.training, rng);
    });

    std::ostringstream csv;
    csv << "# config_hash=" << hex64(hash_) << "\n";
    for (std::size_t c = 0; c < kTrainReportHeader.size(); ++c)
        csv << kTrainReportHeader[c] << (c + 1 < kTrainReportHeader.size() ? "," : "\n");
    for (const Job& job : jobs) {
        const std::filesystem::path path = model_path(job.role, job.model->id());
        save_model(path, *job.model);
        outcome.outputs.push_back(
            std::filesystem::relative(path, outdir_).generic_string());
        const HyperConfig& cfg = job.model->config();
        csv << job.model->id() << "," << job.role << "," << cfg.n_layers << ","
            << cfg.n_neurons << "," << io::format_double(cfg.learning_rate) << "," << cfg.seed
            << "," << io::format_double(job.report.final_train_loss) << "," << job.report.epochs
            << "," << io::format_double(job.report.wall_seconds) << "\n";
    }
    io::atomic_write(outdir_ / "train_reports.csv", csv.str());
    outcome.outputs.push_back("train_reports.csv");
    write_manifest("train-grid", outcome.outputs);
    return outcome;
}

StageOutcome Pipeline::metrics() {
    require_stage("train-grid", "train-grid");
    StageOutcome outcome{"metrics", false, {}};
    if (up_to_date("metrics")) {
        outcome.skipped = true;
        return outcome;
    }

    const Splits splits = load_splits();
    const LoadedModels models = load_models();
    const EnergyModel energy{config_.energy_cost_per_mac};

    // Per-model metric values on the validation and test splits.
    std::ostringstream csv;
    csv << "# config_hash=" << hex64(hash_) << "\n";
    for (std::size_t c = 0; c < kModelMetricsHeader.size(); ++c)
        csv << kModelMetricsHeader[c] << (c + 1 < kModelMetricsHeader.size() ? "," : "\n");
    auto emit_rows = [&](const std::vector<std::shared_ptr<MLPModel>>& list,
                         const std::string& role) {
        for (const auto& m : list) {
            const LatencyResult lat_val = latency_metric(*m, splits.val, config_.latency_repeats);
            const LatencyResult lat_test =
                latency_metric(*m, splits.test, config_.latency_repeats);
            const HyperConfig& cfg = m->config();
            csv << m->id() << "," << role << "," << cfg.n_layers << "," << cfg.n_neurons << ","
                << io::format_double(cfg.learning_rate) << "," << cfg.seed << ","
                << io::format_double(val_loss(*m, splits.val)) << ","
                << io::format_double(val_loss(*m, splits.test)) << ","
                << io::format_double(l0_metric(*m, splits.val)) << ","
                << io::format_double(l0_metric(*m, splits.test)) << ","
                << io::format_double(energy_metric(*m, splits.val, energy)) << ","
                << io::format_double(energy_metric(*m, splits.test, energy)) << ","
                << lat_val.op_count_proxy << "," << lat_test.op_count_proxy << ","
                << io::format_double(lat_val.wall_median_seconds) << ","
                << io::format_double(lat_test.wall_median_seconds) << "\n";
        }
    };
    emit_rows(models.victims, "victim");
    emit_rows(models.surrogates, "surrogate");
    io::atomic_write(outdir_ / "model_metrics.csv", csv.str());
    outcome.outputs.push_back("model_metrics.csv");

    // Alpha tables per attack set, from the attacker's models.
    for (Knowledge k : config_.knowledge) {
        const auto& attack_models =
            k == Knowledge::WhiteBox ? models.victims : models.surrogates;
        for (Grouping g : config_.groupings) {
            for (const ModelGrid& grid : partition_grid(attack_models, g)) {
                const std::string grid_id =
                    grid.group_key.empty() ? "global" : grid.group_key;
                for (HijackMetricKind m : config_.metrics) {
                    const MetricTable table = compute_alpha_table(
                        m, grid.models, splits.val, energy, config_.latency_repeats);
                    const std::filesystem::path path = metric_table_path(k, g, grid_id, m);
                    write_metric_table_csv(path, table, grid.models, hash_);
                    outcome.outputs.push_back(
                        std::filesystem::relative(path, outdir_).generic_string());
                }
            }
        }
    }
    write_manifest("metrics", outcome.outputs);
    return outcome;
}

StageOutcome Pipeline::train_hvae() {
    require_stage("metrics", "metrics");
    StageOutcome outcome{"train-hvae", false, {}};
    if (up_to_date("train-hvae")) {
        outcome.skipped = true;
        return outcome;
    }

    const Splits splits = load_splits();
    const LoadedModels models = load_models();
    const std::vector<SetRef> sets = enumerate_sets(config_, models.victims);

    std::vector<std::vector<std::string>> outputs(sets.size());
    parallel_for(sets.size(), jobs_, [&](std::size_t i) {
        const SetRef& set = sets[i];
        const auto& attack_models =
            set.knowledge == Knowledge::WhiteBox ? models.victims : models.surrogates;
        const ModelGrid grid = partition_grid(attack_models, set.grouping)[set.grid_index];

        const MetricTable table = read_metric_table_csv(
            metric_table_path(set.knowledge, set.grouping, set.grid_id, set.metric));

        HVAEConfig hvae_cfg = config_.hvae;
        const std::string key =
            attack_set_key(set.knowledge, set.grouping, set.grid_id, set.metric);
        hvae_cfg.seed = mix_seed(config_.seeds.hvae, fnv1a64(key));

        HVAEModel hvae(hvae_cfg, static_cast<int>(splits.train.dim()),
                       splits.train.n_classes);
        Rng train_rng(mix_seed(hvae_cfg.seed, 0x747261696e));
        hijacklab::train_hvae(hvae, splits.train, table, grid.models, hvae_cfg.epochs,
                              hvae_cfg.batch_size, train_rng);

        const std::filesystem::path hpath =
            hvae_path(set.knowledge, set.grouping, set.grid_id, set.metric);
        save_hvae(hpath, hvae, hash_);

        PoisonProvenance prov{hvae_cfg.hash(), hvae_cfg.seed, set.grid_id, set.metric};
        Rng poison_rng(mix_seed(hvae_cfg.seed, 0x706f6973));
        const PoisonSet poison = generate_poison(hvae, splits.val.size(), poison_rng, prov);
        const std::filesystem::path ppath =
            poison_path(set.knowledge, set.grouping, set.grid_id, set.metric);
        save_poison(ppath, poison);

        outputs[i] = {std::filesystem::relative(hpath, outdir_).generic_string(),
                      std::filesystem::relative(ppath, outdir_).generic_string()};
    });
    for (const auto& pair : outputs)
        outcome.outputs.insert(outcome.outputs.end(), pair.begin(), pair.end());
    write_manifest("train-hvae", outcome.outputs);
    return outcome;
}

StageOutcome Pipeline::attack() {
    require_stage("train-hvae", "train-hvae");
    StageOutcome outcome{"attack", false, {"attack_reports.csv"}};
    if (up_to_date("attack")) {
        outcome.skipped = true;
        return outcome;
    }

    const Splits splits = load_splits();
    const LoadedModels models = load_models();
    const std::vector<SetRef> sets = enumerate_sets(config_, models.victims);
    const EnergyModel energy{config_.energy_cost_per_mac};

    const std::size_t rates = config_.rates.size();
    std::vector<AttackReport> reports(sets.size() * rates);
    parallel_for(sets.size(), jobs_, [&](std::size_t i) {
        const SetRef& set = sets[i];
        const ModelGrid victim_grid =
            partition_grid(models.victims, set.grouping)[set.grid_index];
        const std::string key =
            attack_set_key(set.knowledge, set.grouping, set.grid_id, set.metric);
        auto record_error = [&](std::size_t r, const std::string& message) {
            AttackReport& rep = reports[i * rates + r];
            rep.grid_id = set.grid_id;
            rep.grouping = set.grouping;
            rep.metric = set.metric;
            rep.knowledge = set.knowledge;
            rep.rate = config_.rates[r];
            rep.error = message;
        };
        try {
            const PoisonSet poison = load_poison(
                poison_path(set.knowledge, set.grouping, set.grid_id, set.metric));
            const auto eval_values = eval_metric_values(victim_grid, set.metric, splits.test,
                                                        energy, config_.latency_repeats);
            for (std::size_t r = 0; r < rates; ++r) {
                const double rate = config_.rates[r];
                const std::uint64_t subst_seed = mix_seed(
                    config_.seeds.substitution, fnv1a64(key + "|" + io::format_double(rate)));
                try {
                    reports[i * rates + r] =
                        evaluate_cell(victim_grid, splits.val, poison, rate, subst_seed,
                                      eval_values, set.metric, set.knowledge);
                } catch (const std::exception& e) {
                    record_error(r, e.what());
                }
            }
        } catch (const std::exception& e) {
            for (std::size_t r = 0; r < rates; ++r) record_error(r, e.what());
        }
    });
    write_attack_reports_csv(outdir_ / "attack_reports.csv", reports, hash_);
    write_manifest("attack", outcome.outputs);
    return outcome;
}

StageOutcome Pipeline::report() {
    require_stage("attack", "attack");
    StageOutcome outcome{"report", false, {"summary.json", "rate_curves.csv"}};
    if (up_to_date("report")) {
        outcome.skipped = true;
        return outcome;
    }

    const auto reports = read_attack_reports_csv(outdir_ / "attack_reports.csv");
    const auto aggregates = aggregate_reports(reports);

    nlohmann::ordered_json summary;
    summary["config_hash"] = hex64(hash_);
    summary["n_cells"] = reports.size();
    int n_errors = 0;
    nlohmann::ordered_json errors = nlohmann::ordered_json::array();
    for (const AttackReport& r : reports) {
        if (r.error.empty()) continue;
        ++n_errors;
        errors.push_back({{"grid_id", r.grid_id},
                          {"grouping", grouping_name(r.grouping)},
                          {"metric", metric_kind_name(r.metric)},
                          {"knowledge", knowledge_name(r.knowledge)},
                          {"rate", r.rate},
                          {"error", r.error}});
    }
    summary["n_errors"] = n_errors;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const AggregateEntry& a : aggregates)
        rows.push_back({{"grouping", grouping_name(a.grouping)},
                        {"metric", metric_kind_name(a.metric)},
                        {"knowledge", knowledge_name(a.knowledge)},
                        {"rate", a.rate},
                        {"n_sets", a.n_sets},
                        {"n_defined", a.n_defined},
                        {"n_success", a.n_success},
                        {"asr_percent", a.asr_percent},
                        {"mean_esf", a.mean_esf}});
    summary["aggregates"] = rows;
    summary["errors"] = errors;
    io::atomic_write(outdir_ / "summary.json", summary.dump(2) + "\n");

    // Tidy long-format table for external plotting of the poisoning-rate curves.
    std::ostringstream csv;
    csv << "# config_hash=" << hex64(hash_) << "\n";
    csv << "grouping,metric,knowledge,rate,n_sets,n_defined,n_success,asr_percent,mean_esf\n";
    for (const AggregateEntry& a : aggregates)
        csv << grouping_name(a.grouping) << "," << metric_kind_name(a.metric) << ","
            << knowledge_name(a.knowledge) << "," << io::format_double(a.rate) << ","
            << a.n_sets << "," << a.n_defined << "," << a.n_success << ","
            << io::format_double(a.asr_percent) << "," << io::format_double(a.mean_esf)
            << "\n";
    io::atomic_write(outdir_ / "rate_curves.csv", csv.str());

    write_manifest("report", outcome.outputs);
    return outcome;
}

std::vector<StageOutcome> Pipeline::run_all() {
    std::vector<StageOutcome> outcomes;
    outcomes.push_back(gen_data());
    outcomes.push_back(train_grid());
    outcomes.push_back(metrics());
    outcomes.push_back(train_hvae());
    outcomes.push_back(attack());
    outcomes.push_back(report());
    return outcomes;
}

}  // namespace hijacklab
