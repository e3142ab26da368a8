#include "hijacklab/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/parallel.hpp"

namespace hijacklab {

const char* knowledge_name(Knowledge k) {
    return k == Knowledge::WhiteBox ? "white_box" : "black_box";
}

Knowledge knowledge_from_name(const std::string& name) {
    if (name == "white_box") return Knowledge::WhiteBox;
    if (name == "black_box") return Knowledge::BlackBox;
    throw ContractError("unknown knowledge level '" + name + "'");
}

SelectionResult select_model(const ModelGrid& grid, const Dataset& validation,
                             const std::string& set_kind) {
    if (grid.models.empty()) throw ContractError("select_model: empty grid");
    if (validation.size() == 0) throw ContractError("select_model: empty validation set");
    SelectionResult result;
    result.set_kind = set_kind;
    for (const auto& model : grid.models)
        result.losses[model->id()] = val_loss(*model, validation);
    // Ties break toward the lowest id; the map iterates ids in order.
    result.selected_id = result.losses.begin()->first;
    for (const auto& [id, loss] : result.losses)
        if (loss < result.losses.at(result.selected_id)) result.selected_id = id;
    return result;
}

Dataset substitute_at_rate(const Dataset& clean, const PoisonSet& poison, double rate,
                           Rng& rng) {
    if (rate < 0.0 || rate > 1.0)
        throw ContractError("substitute_at_rate: rate must be in [0, 1]");
    clean.validate();
    const std::size_t n = clean.size();
    const std::size_t k = static_cast<std::size_t>(rate * static_cast<double>(n));
    if (poison.size() < k)
        throw ContractError("substitute_at_rate: need " + std::to_string(k) +
                            " poison samples, have " + std::to_string(poison.size()));

    // Partial Fisher-Yates: the first k entries are a uniform draw without
    // replacement.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }

    Dataset mixed = clean;
    const std::size_t d = clean.dim();
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t dst = order[i];
        std::copy_n(&poison.samples.data[i * d], d, &mixed.samples.data[dst * d]);
        mixed.labels[dst] = poison.labels[i];
    }
    return mixed;
}

EsfResult esf(const std::map<int, double>& eval_values, int legit_id, int hijacked_id) {
    if (!eval_values.count(legit_id) || !eval_values.count(hijacked_id))
        throw ContractError("esf: model id missing from eval values");
    EsfResult out;
    if (hijacked_id == legit_id) return out;  // selection unchanged
    double mx = eval_values.begin()->second;
    for (const auto& [id, v] : eval_values) mx = std::max(mx, v);
    const double legit = eval_values.at(legit_id);
    if (mx - legit == 0.0) {
        out.undefined_legit_is_max = true;
        return out;
    }
    out.value = (eval_values.at(hijacked_id) - legit) / (mx - legit);
    return out;
}

int asr(double esf_value) {
    return esf_value > 0.0 ? 1 : 0;
}

double impact_factor(const std::map<int, double>& eval_values, int legit_id, int hijacked_id) {
    if (!eval_values.count(legit_id) || !eval_values.count(hijacked_id))
        throw ContractError("impact_factor: model id missing from eval values");
    const double legit = eval_values.at(legit_id);
    if (legit <= 0.0)
        throw ContractError("impact_factor: legitimate model metric must be > 0");
    return eval_values.at(hijacked_id) / legit;
}

std::string attack_set_key(Knowledge knowledge, Grouping grouping, const std::string& grid_id,
                           HijackMetricKind metric) {
    return std::string(knowledge_name(knowledge)) + "|" + grouping_name(grouping) + "|" +
           grid_id + "|" + metric_kind_name(metric);
}

CraftResult craft_attack_set(const AttackSetInputs& inputs) {
    if (!inputs.victim_grid || !inputs.attack_grid || !inputs.s_train || !inputs.s_val)
        throw ContractError("craft_attack_set: missing inputs");
    CraftResult out;
    out.table = compute_alpha_table(inputs.metric, inputs.attack_grid->models, *inputs.s_val,
                                    inputs.energy, inputs.latency_repeats);
    out.hvae = std::make_shared<HVAEModel>(inputs.hvae_config,
                                           static_cast<int>(inputs.s_train->dim()),
                                           inputs.s_train->n_classes);
    Rng train_rng(mix_seed(inputs.hvae_config.seed, 0x747261696e));  // "train"
    out.log = train_hvae(*out.hvae, *inputs.s_train, out.table, inputs.attack_grid->models,
                         inputs.hvae_config.epochs, inputs.hvae_config.batch_size, train_rng);

    const std::string grid_id =
        inputs.victim_grid->group_key.empty() ? "global" : inputs.victim_grid->group_key;
    PoisonProvenance prov{inputs.hvae_config.hash(), inputs.hvae_config.seed, grid_id,
                          inputs.metric};
    Rng poison_rng(mix_seed(inputs.hvae_config.seed, 0x706f6973));  // "pois"
    out.poison = generate_poison(*out.hvae, inputs.s_val->size(), poison_rng, prov);
    return out;
}

std::map<int, double> eval_metric_values(const ModelGrid& grid, HijackMetricKind metric,
                                         const Dataset& s_test, const EnergyModel& energy,
                                         int latency_repeats) {
    std::map<int, double> values;
    for (const auto& model : grid.models)
        values[model->id()] = metric_value(metric, *model, s_test, energy, latency_repeats);
    return values;
}

AttackReport evaluate_cell(const ModelGrid& victim_grid, const Dataset& s_val_clean,
                           const PoisonSet& poison, double rate, std::uint64_t subst_seed,
                           const std::map<int, double>& eval_values, HijackMetricKind metric,
                           Knowledge knowledge) {
    AttackReport report;
    report.grid_id = victim_grid.group_key.empty() ? "global" : victim_grid.group_key;
    report.grouping = victim_grid.grouping;
    report.metric = metric;
    report.knowledge = knowledge;
    report.rate = rate;
    report.eval_values = eval_values;

    report.legit_id = select_model(victim_grid, s_val_clean, "clean").selected_id;
    Rng rng(subst_seed);
    Dataset mixed = substitute_at_rate(s_val_clean, poison, rate, rng);
    report.hijacked_id =
        select_model(victim_grid, mixed, "poisoned(" + io::format_double(rate) + ")")
            .selected_id;

    const EsfResult score = esf(eval_values, report.legit_id, report.hijacked_id);
    report.esf_undefined = score.undefined_legit_is_max;
    if (!report.esf_undefined) {
        report.esf_value = score.value;
        report.asr_value = asr(score.value);
    }
    report.impact = impact_factor(eval_values, report.legit_id, report.hijacked_id);
    return report;
}

std::vector<AttackReport> run_attack_matrix(const MatrixInputs& inputs) {
    if (inputs.victims.empty()) throw ContractError("run_attack_matrix: no victim models");
    const bool wants_bb = std::find(inputs.knowledges.begin(), inputs.knowledges.end(),
                                    Knowledge::BlackBox) != inputs.knowledges.end();
    if (wants_bb && inputs.surrogates.empty())
        throw ContractError("run_attack_matrix: black-box cells need surrogate models");

    struct SetTask {
        Knowledge knowledge;
        ModelGrid victim_grid;
        ModelGrid attack_grid;
        HijackMetricKind metric;
    };
    std::vector<SetTask> tasks;
    for (Knowledge knowledge : inputs.knowledges) {
        for (Grouping grouping : inputs.groupings) {
            const auto victim_grids = partition_grid(inputs.victims, grouping);
            const auto attack_grids = knowledge == Knowledge::WhiteBox
                                          ? victim_grids
                                          : partition_grid(inputs.surrogates, grouping);
            if (attack_grids.size() != victim_grids.size())
                throw ContractError("run_attack_matrix: surrogate space does not mirror victims");
            for (std::size_t g = 0; g < victim_grids.size(); ++g)
                for (HijackMetricKind metric : inputs.metrics)
                    tasks.push_back(
                        SetTask{knowledge, victim_grids[g], attack_grids[g], metric});
        }
    }

    const std::size_t rates = inputs.rates.size();
    std::vector<AttackReport> reports(tasks.size() * rates);
    parallel_for(tasks.size(), inputs.jobs, [&](std::size_t ti) {
        const SetTask& task = tasks[ti];
        const std::string grid_id =
            task.victim_grid.group_key.empty() ? "global" : task.victim_grid.group_key;
        const std::string key =
            attack_set_key(task.knowledge, task.victim_grid.grouping, grid_id, task.metric);

        auto fill_error = [&](const std::string& message) {
            for (std::size_t r = 0; r < rates; ++r) {
                AttackReport& rep = reports[ti * rates + r];
                rep.grid_id = grid_id;
                rep.grouping = task.victim_grid.grouping;
                rep.metric = task.metric;
                rep.knowledge = task.knowledge;
                rep.rate = inputs.rates[r];
                rep.error = message;
            }
        };

        try {
            AttackSetInputs set;
            set.knowledge = task.knowledge;
            set.victim_grid = &task.victim_grid;
            set.attack_grid = &task.attack_grid;
            set.metric = task.metric;
            set.s_train = &inputs.s_train;
            set.s_val = &inputs.s_val;
            set.hvae_config = inputs.hvae_config;
            set.hvae_config.seed = mix_seed(inputs.hvae_seed_base, fnv1a64(key));
            set.energy = inputs.energy;
            set.latency_repeats = inputs.latency_repeats;
            const CraftResult craft = craft_attack_set(set);

            const auto eval_values = eval_metric_values(task.victim_grid, task.metric,
                                                        inputs.s_test, inputs.energy,
                                                        inputs.latency_repeats);
            for (std::size_t r = 0; r < rates; ++r) {
                const double rate = inputs.rates[r];
                const std::uint64_t subst_seed = mix_seed(
                    inputs.substitution_seed_base, fnv1a64(key + "|" + io::format_double(rate)));
                try {
                    reports[ti * rates + r] =
                        evaluate_cell(task.victim_grid, inputs.s_val, craft.poison, rate,
                                      subst_seed, eval_values, task.metric, task.knowledge);
                } catch (const std::exception& e) {
                    AttackReport& rep = reports[ti * rates + r];
                    rep.grid_id = grid_id;
                    rep.grouping = task.victim_grid.grouping;
                    rep.metric = task.metric;
                    rep.knowledge = task.knowledge;
                    rep.rate = rate;
                    rep.error = e.what();
                }
            }
        } catch (const std::exception& e) {
            fill_error(e.what());
        }
    });
    return reports;
}

std::vector<AggregateEntry> aggregate_reports(const std::vector<AttackReport>& reports) {
    // Key order follows first appearance, which is canonical already.
    std::vector<AggregateEntry> aggregates;
    auto find = [&](const AttackReport& r) -> AggregateEntry& {
        for (AggregateEntry& a : aggregates)
            if (a.grouping == r.grouping && a.metric == r.metric &&
                a.knowledge == r.knowledge && a.rate == r.rate)
                return a;
        aggregates.push_back(AggregateEntry{r.grouping, r.metric, r.knowledge, r.rate,
                                            0, 0, 0, 0.0, 0.0});
        return aggregates.back();
    };
    for (const AttackReport& r : reports) {
        AggregateEntry& a = find(r);
        a.n_sets += 1;
        if (!r.error.empty() || r.esf_undefined) continue;
        a.n_defined += 1;
        a.n_success += r.asr_value;
        a.mean_esf += r.esf_value;
    }
    for (AggregateEntry& a : aggregates) {
        if (a.n_defined > 0) {
            a.asr_percent = 100.0 * static_cast<double>(a.n_success) /
                            static_cast<double>(a.n_defined);
            a.mean_esf /= static_cast<double>(a.n_defined);
        }
    }
    return aggregates;
}

void write_attack_reports_csv(const std::filesystem::path& path,
                              const std::vector<AttackReport>& reports,
                              std::uint64_t config_hash) {
    std::ostringstream os;
    os << "# config_hash=" << std::hex << config_hash << std::dec << "\n";
    os << "grid_id,grouping,metric,knowledge,rate,legit_id,hijacked_id,esf,asr,impact\n";
    for (const AttackReport& r : reports) {
        os << r.grid_id << "," << grouping_name(r.grouping) << "," << metric_kind_name(r.metric)
           << "," << knowledge_name(r.knowledge) << "," << io::format_double(r.rate) << ",";
        if (!r.error.empty()) {
            os << ",,,,\n";  // failed cell: ids and scores stay empty
            continue;
        }
        os << r.legit_id << "," << r.hijacked_id << ",";
        if (r.esf_undefined)
            os << "undefined_legit_is_max,,";
        else
            os << io::format_double(r.esf_value) << "," << r.asr_value << ",";
        os << io::format_double(r.impact) << "\n";
    }
    io::atomic_write(path, os.str());
}

std::vector<AttackReport> read_attack_reports_csv(const std::filesystem::path& path) {
    const io::CsvFile csv = io::read_csv(path);
    if (csv.header !=
        std::vector<std::string>{"grid_id", "grouping", "metric", "knowledge", "rate",
                                 "legit_id", "hijacked_id", "esf", "asr", "impact"})
        throw ParseError("unexpected attack report header in " + path.string());
    std::vector<AttackReport> reports;
    for (const auto& row : csv.rows) {
        if (row.size() != 10) throw ParseError("short attack report row in " + path.string());
        AttackReport r;
        r.grid_id = row[0];
        r.grouping = grouping_from_name(row[1]);
        r.metric = metric_kind_from_name(row[2]);
        r.knowledge = knowledge_from_name(row[3]);
        r.rate = io::parse_double(row[4], "report rate");
        if (row[5].empty()) {
            r.error = "cell failed";
        } else {
            r.legit_id = static_cast<int>(io::parse_int(row[5], "report legit_id"));
            r.hijacked_id = static_cast<int>(io::parse_int(row[6], "report hijacked_id"));
            if (row[7] == "undefined_legit_is_max") {
                r.esf_undefined = true;
            } else {
                r.esf_value = io::parse_double(row[7], "report esf");
                r.asr_value = static_cast<int>(io::parse_int(row[8], "report asr"));
            }
            r.impact = io::parse_double(row[9], "report impact");
        }
        reports.push_back(std::move(r));
    }
    return reports;
}

}  // namespace hijacklab
