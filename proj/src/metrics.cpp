#include "hijacklab/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"

namespace hijacklab {

const char* metric_kind_name(HijackMetricKind kind) {
    switch (kind) {
        case HijackMetricKind::Generalization: return "generalization";
        case HijackMetricKind::Latency: return "latency";
        case HijackMetricKind::Energy: return "energy";
        case HijackMetricKind::L0Norm: return "l0";
    }
    return "?";
}

HijackMetricKind metric_kind_from_name(const std::string& name) {
    if (name == "generalization") return HijackMetricKind::Generalization;
    if (name == "latency") return HijackMetricKind::Latency;
    if (name == "energy") return HijackMetricKind::Energy;
    if (name == "l0") return HijackMetricKind::L0Norm;
    throw ContractError("unknown hijack metric '" + name + "'");
}

double generalization_metric(const MLPModel& model, const Dataset& clean_val) {
    if (clean_val.size() == 0) throw ContractError("generalization_metric: empty dataset");
    return val_loss(model, clean_val);
}

LatencyResult latency_metric(const MLPModel& model, const Dataset& data, int repeats) {
    if (repeats < 1) throw ContractError("latency_metric: repeats must be >= 1");
    LatencyResult out;
    out.op_count_proxy = model.macs_per_sample() * static_cast<long long>(data.size());
    std::vector<double> times;
    times.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor logits = model.forward(data.samples);
        volatile double sink = logits.numel() ? logits.data[0] : 0.0;
        (void)sink;
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    out.wall_median_seconds =
        times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
    return out;
}

double l0_metric(const MLPModel& model, const Dataset& data) {
    if (data.size() == 0) throw ContractError("l0_metric: empty dataset");
    const auto trace = model.forward_with_activations(data.samples);
    std::size_t total = 0;
    for (std::size_t c : trace.relu_counts) total += c;
    return static_cast<double>(total) / static_cast<double>(data.size());
}

double energy_metric(const MLPModel& model, const Dataset& data, const EnergyModel& energy) {
    if (data.size() == 0) throw ContractError("energy_metric: empty dataset");
    if (energy.cost_per_mac <= 0) throw ContractError("energy_metric: cost_per_mac must be > 0");

    // Per-sample cost is sum_layers nnz(input) * fan_out; summed over the
    // batch that is fan_out-weighted aggregate nonzero counts.
    const auto trace = model.forward_with_activations(data.samples);
    std::size_t input_nnz = 0;
    for (double v : data.samples.data)
        if (v != 0.0) ++input_nnz;

    const auto& layers = model.layers();
    double total = static_cast<double>(input_nnz) *
                   static_cast<double>(layers[0].weight.value.shape[1]);
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
        total += static_cast<double>(trace.relu_counts[l]) *
                 static_cast<double>(layers[l + 1].weight.value.shape[1]);
    return energy.cost_per_mac * total / static_cast<double>(data.size());
}

std::map<int, double> alpha_from_values(const std::map<int, double>& values) {
    if (values.size() < 2) throw ContractError("alpha_from_values: need at least 2 models");
    double mx = values.begin()->second, mn = values.begin()->second;
    for (const auto& [id, v] : values) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (mx - mn <= 1e-12)
        throw ContractError("degenerate metric spread: all hijack-metric values equal");
    std::map<int, double> alphas;
    for (const auto& [id, v] : values) alphas[id] = (mx - v) / (mx - mn);
    return alphas;
}

double metric_value(HijackMetricKind kind, const MLPModel& model, const Dataset& data,
                    const EnergyModel& energy, int latency_repeats) {
    switch (kind) {
        case HijackMetricKind::Generalization: return generalization_metric(model, data);
        case HijackMetricKind::Latency:
            return static_cast<double>(latency_metric(model, data, latency_repeats).op_count_proxy);
        case HijackMetricKind::Energy: return energy_metric(model, data, energy);
        case HijackMetricKind::L0Norm: return l0_metric(model, data);
    }
    throw ContractError("metric_value: bad kind");
}

MetricTable compute_alpha_table(HijackMetricKind kind,
                                const std::vector<std::shared_ptr<MLPModel>>& models,
                                const Dataset& clean_val, const EnergyModel& energy,
                                int latency_repeats) {
    if (models.size() < 2) throw ContractError("compute_alpha_table: need at least 2 models");
    MetricTable table;
    table.kind = kind;
    for (const auto& m : models) {
        if (m->id() < 0) throw ContractError("compute_alpha_table: model without id");
        if (table.values.count(m->id()))
            throw ContractError("compute_alpha_table: duplicate model id " +
                                std::to_string(m->id()));
        table.values[m->id()] = metric_value(kind, *m, clean_val, energy, latency_repeats);
    }
    table.alphas = alpha_from_values(table.values);
    return table;
}

void write_metric_table_csv(const std::filesystem::path& path, const MetricTable& table,
                            const std::vector<std::shared_ptr<MLPModel>>& models,
                            std::uint64_t config_hash) {
    std::map<int, const MLPModel*> by_id;
    for (const auto& m : models) by_id[m->id()] = m.get();
    std::ostringstream os;
    os << "# config_hash=" << std::hex << config_hash << std::dec << "\n";
    os << "model_id,n_layers,n_neurons,lr,metric_kind,value,alpha\n";
    for (const auto& [id, value] : table.values) {
        const auto it = by_id.find(id);
        if (it == by_id.end())
            throw ContractError("write_metric_table_csv: no model for id " + std::to_string(id));
        const HyperConfig& cfg = it->second->config();
        os << id << "," << cfg.n_layers << "," << cfg.n_neurons << ","
           << io::format_double(cfg.learning_rate) << "," << metric_kind_name(table.kind) << ","
           << io::format_double(value) << "," << io::format_double(table.alphas.at(id)) << "\n";
    }
    io::atomic_write(path, os.str());
}

MetricTable read_metric_table_csv(const std::filesystem::path& path) {
    const io::CsvFile csv = io::read_csv(path);
    if (csv.header != std::vector<std::string>{"model_id", "n_layers", "n_neurons", "lr",
                                               "metric_kind", "value", "alpha"})
        throw ParseError("unexpected metric table header in " + path.string());
    MetricTable table;
    bool have_kind = false;
    for (const auto& row : csv.rows) {
        if (row.size() != 7) throw ParseError("short metric table row in " + path.string());
        const int id = static_cast<int>(io::parse_int(row[0], "metric table model_id"));
        if (!have_kind) {
            table.kind = metric_kind_from_name(row[4]);
            have_kind = true;
        }
        table.values[id] = io::parse_double(row[5], "metric table value");
        table.alphas[id] = io::parse_double(row[6], "metric table alpha");
    }
    if (!have_kind) throw ParseError("empty metric table " + path.string());
    return table;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ContractError("pearson: need two equally sized series of length >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw ContractError("pearson: zero variance series");
    return cov / std::sqrt(va * vb);
}

}  // namespace hijacklab
