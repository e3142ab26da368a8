// Acceptance suite: end-to-end checks of the laboratory, one line per
// criterion. Each check either validates an exact contract or compares the
// implementation against an independent reimplementation written here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hijacklab/config.hpp"
#include "hijacklab/dataset.hpp"
#include "hijacklab/errors.hpp"
#include "hijacklab/hvae.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/metrics.hpp"
#include "hijacklab/mlp.hpp"
#include "hijacklab/pipeline.hpp"
#include "hijacklab/rng.hpp"
#include "hijacklab/selection.hpp"
#include "hijacklab/tape.hpp"

using namespace hijacklab;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    std::string description;
    std::function<std::string()> run;  // returns detail text; throws on failure
};

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw Failure(message);
}

std::string fmt(double v) {
    return io::format_double(v);
}

fs::path temp_dir(const std::string& tag) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("hijacklab_acceptance_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

double elapsed_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

// Independent mean softmax cross-entropy, reimplemented for the oracles.
double oracle_ce_mean(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t rows = logits.shape[0], cols = logits.shape[1];
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = logits.data[r * cols];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, logits.data[r * cols + c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(logits.data[r * cols + c] - mx);
        total += mx + std::log(sum) - logits.data[r * cols + static_cast<std::size_t>(labels[r])];
    }
    return total / static_cast<double>(rows);
}

// ---------------------------------------------------------------------------
// Criterion 1: gradients against central finite differences.
// ---------------------------------------------------------------------------

std::string check_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst_mlp = 0.0;
    int graphs = 0;
    for (std::uint64_t trial = 0; trial < 110; ++trial) {
        Rng rng(mix_seed(0xACCE91, trial));
        const int n_layers = 1 + static_cast<int>(rng.below(3));
        const std::size_t width = 2 + rng.below(31);  // up to 32
        const std::size_t in_dim = 2 + rng.below(7);
        const std::size_t batch = 1 + rng.below(4);
        const std::size_t classes = 2 + rng.below(3);

        std::vector<Parameter> params;
        params.reserve(2 * (n_layers + 1));
        std::size_t in = in_dim;
        for (int l = 0; l < n_layers; ++l) {
            params.emplace_back("w" + std::to_string(l), random_tensor({in, width}, rng, -0.7, 0.7));
            params.emplace_back("b" + std::to_string(l), random_tensor({width}, rng, -0.3, 0.3));
            in = width;
        }
        params.emplace_back("wout", random_tensor({in, classes}, rng, -0.7, 0.7));
        params.emplace_back("bout", random_tensor({classes}, rng, -0.3, 0.3));

        const Tensor x = random_tensor({batch, in_dim}, rng);
        std::vector<int> labels;
        for (std::size_t i = 0; i < batch; ++i)
            labels.push_back(static_cast<int>(rng.below(classes)));
        const Tensor target = random_tensor({batch, classes}, rng);
        const bool use_ce = rng.below(2) == 0;

        auto build = [&](Tape& t) -> Value {
            Value h = t.input(x);
            for (int l = 0; l < n_layers; ++l)
                h = t.relu(t.add(t.matmul(h, t.param(params[2 * l])),
                                 t.param(params[2 * l + 1])));
            Value out = t.add(t.matmul(h, t.param(params[2 * n_layers])),
                              t.param(params[2 * n_layers + 1]));
            if (use_ce) return t.softmax_cross_entropy(out, labels);
            Value err = t.sub(out, t.input(target));
            return t.mean_all(t.mul(err, err));
        };
        std::vector<Parameter*> ptrs;
        for (Parameter& p : params) ptrs.push_back(&p);
        const GradCheckReport report = grad_check(build, ptrs, 1e-4);
        require(report.pass, "graph " + std::to_string(trial) + " max_rel_err " +
                                 fmt(report.max_rel_err) + " >= 1e-4");
        worst_mlp = std::max(worst_mlp, report.max_rel_err);
        ++graphs;
    }

    // HVAE objective on a two-model toy instance, noise held fixed.
    Dataset data = synth_blobs(6, 3, 2, 0.15, 7001);
    std::vector<std::shared_ptr<MLPModel>> victims;
    for (int i = 0; i < 2; ++i) {
        auto m = std::make_shared<MLPModel>(HyperConfig{1, 4, 0.3, 7100u + i}, 3, 2, i);
        Rng rng(mix_seed(7200, i));
        train_model(*m, data, TrainOptions{3, 4}, rng);
        victims.push_back(std::move(m));
    }
    MetricTable table;
    table.kind = HijackMetricKind::Generalization;
    table.alphas = {{0, 1.0}, {1, 0.25}};
    table.values = {{0, 0.0}, {1, 1.0}};
    HVAEModel hvae(HVAEConfig{2, {4}, ReconKind::BCE, 1e-3, 1, 8, 7300}, 3, 2);
    Rng noise_rng(7400);
    const HvaeNoise noise = draw_hvae_noise(hvae, data.size(), noise_rng);

    auto eval_total = [&]() {
        return hvae_forward_loss(hvae, data.samples, data.labels, table, victims, noise)
            .parts.total;
    };
    auto fw = hvae_forward_loss(hvae, data.samples, data.labels, table, victims, noise);
    const GradMap grads = fw.tape.backward(fw.total);
    double worst_hvae = 0.0;
    const double h = 1e-5;
    for (Parameter* p : hvae.parameters()) {
        const Tensor* g = grads.count(p->name) ? &grads.at(p->name) : nullptr;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double up = eval_total();
            p->value.data[i] = saved - h;
            const double down = eval_total();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = g ? g->data[i] : 0.0;
            worst_hvae = std::max(
                worst_hvae, std::abs(analytic - numeric) / std::max(1e-8, std::abs(numeric)));
        }
    }
    require(worst_hvae < 1e-3, "hvae objective max_rel_err " + fmt(worst_hvae) + " >= 1e-3");

    const double secs = elapsed_seconds(t0);
    require(secs < 60.0, "runtime " + fmt(secs) + "s exceeds 60s");
    return std::to_string(graphs) + " graphs, mlp err " + fmt(worst_mlp) + ", hvae err " +
           fmt(worst_hvae) + ", " + fmt(secs) + "s";
}

// ---------------------------------------------------------------------------
// Criterion 2: formula paths against brute-force reimplementations.
// ---------------------------------------------------------------------------

std::string check_formula_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    auto track = [&](double a, double b, const std::string& what) {
        const double err = std::abs(a - b);
        worst = std::max(worst, err);
        require(err < 1e-9, what + ": |" + fmt(a) + " - " + fmt(b) + "| >= 1e-9");
    };

    // Alpha table against a direct evaluation of the normalization formula.
    for (std::uint64_t trial = 0; trial < 55; ++trial) {
        Rng rng(mix_seed(0xA1FA, trial));
        std::map<int, double> values;
        const int n = 2 + static_cast<int>(rng.below(12));
        for (int i = 0; i < n; ++i) values[i] = -5.0 + 10.0 * rng.uniform();
        double mx = values.at(0), mn = values.at(0);
        for (const auto& [id, v] : values) {
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        if (mx - mn <= 1e-12) continue;
        const auto alphas = alpha_from_values(values);
        for (const auto& [id, v] : values)
            track(alphas.at(id), (mx - v) / (mx - mn), "alpha[" + std::to_string(id) + "]");
    }

    // Hj_cost against an explicit loop over models and samples.
    for (std::uint64_t trial = 0; trial < 55; ++trial) {
        Rng rng(mix_seed(0x4A0C, trial));
        Dataset data = synth_blobs(6 + rng.below(10), 4, 3, 0.2, rng.next_u64());
        std::vector<std::shared_ptr<MLPModel>> models;
        MetricTable table;
        table.kind = HijackMetricKind::Generalization;
        const int n_models = 2 + static_cast<int>(rng.below(4));
        for (int i = 0; i < n_models; ++i) {
            auto m = std::make_shared<MLPModel>(
                HyperConfig{1 + static_cast<int>(rng.below(2)), 6, 0.3, rng.next_u64()}, 4, 3,
                i);
            models.push_back(std::move(m));
            table.alphas[i] = rng.uniform();
            table.values[i] = 0.0;
        }
        HVAEModel hvae(HVAEConfig{3, {6}, ReconKind::BCE, 1e-3, 1, 8, rng.next_u64()}, 4, 3);
        Rng fw_rng(rng.next_u64());
        auto fw = hvae_forward_loss(hvae, data.samples, data.labels, table, models, fw_rng);
        double naive = 0.0;
        for (const auto& m : models)
            naive += table.alphas.at(m->id()) *
                     oracle_ce_mean(m->forward(fw.generated.samples), fw.generated.labels);
        naive /= static_cast<double>(models.size());
        track(fw.parts.hj_cost, naive, "hj_cost");
    }

    // Selection against an exhaustive argmin with its own loss loop.
    for (std::uint64_t trial = 0; trial < 55; ++trial) {
        Rng rng(mix_seed(0x5E1E, trial));
        Dataset data = synth_blobs(10 + rng.below(30), 4, 3, 0.25, rng.next_u64());
        ModelGrid grid{Grouping::Global, "", {}};
        const int n_models = 2 + static_cast<int>(rng.below(5));
        for (int i = 0; i < n_models; ++i) {
            auto m = std::make_shared<MLPModel>(
                HyperConfig{1 + static_cast<int>(rng.below(2)), 6, 0.4, rng.next_u64()}, 4, 3,
                i);
            Rng train_rng(rng.next_u64());
            train_model(*m, data, TrainOptions{static_cast<int>(rng.below(4)), 8}, train_rng);
            grid.models.push_back(std::move(m));
        }
        const SelectionResult got = select_model(grid, data);
        int best = -1;
        double best_loss = 0.0;
        for (const auto& m : grid.models) {
            const double loss = oracle_ce_mean(m->forward(data.samples), data.labels);
            track(got.losses.at(m->id()), loss, "selection loss");
            if (best < 0 || loss < best_loss) {
                best = m->id();
                best_loss = loss;
            }
        }
        require(got.selected_id == best, "selection argmin mismatch");
    }

    // ESF, ASR and impact against direct formula evaluations.
    for (std::uint64_t trial = 0; trial < 55; ++trial) {
        Rng rng(mix_seed(0xE5F0, trial));
        std::map<int, double> values;
        const int n = 2 + static_cast<int>(rng.below(8));
        for (int i = 0; i < n; ++i) values[i] = 0.1 + 10.0 * rng.uniform();
        const int legit = static_cast<int>(rng.below(n));
        const int hijacked = static_cast<int>(rng.below(n));
        const EsfResult got = esf(values, legit, hijacked);
        double mx = values.at(0);
        for (const auto& [id, v] : values) mx = std::max(mx, v);
        if (hijacked == legit) {
            require(!got.undefined_legit_is_max && got.value == 0.0, "esf identity case");
        } else if (mx == values.at(legit)) {
            require(got.undefined_legit_is_max, "esf undefined case");
        } else {
            const double naive =
                (values.at(hijacked) - values.at(legit)) / (mx - values.at(legit));
            track(got.value, naive, "esf");
            require(asr(got.value) == (naive > 0.0 ? 1 : 0), "asr indicator");
        }
        track(impact_factor(values, legit, hijacked), values.at(hijacked) / values.at(legit),
              "impact");
    }

    const double secs = elapsed_seconds(t0);
    require(secs < 60.0, "runtime " + fmt(secs) + "s exceeds 60s");
    return "55 instances per formula, worst abs err " + fmt(worst) + ", " + fmt(secs) + "s";
}

// ---------------------------------------------------------------------------
// Criterion 3: ESF trichotomy endpoints, exact.
// ---------------------------------------------------------------------------

std::string check_esf_endpoints() {
    std::map<int, double> values{{0, 1.0}, {1, 2.5}, {2, 4.0}, {3, 3.0}};
    require(esf(values, 0, 0).value == 0.0, "esf(hijacked==legit) != 0");
    require(esf(values, 0, 2).value == 1.0, "esf(hijacked==argmax) != 1");
    require(asr(esf(values, 0, 2).value) == 1, "asr at esf=1");
    require(asr(esf(values, 0, 0).value) == 0, "asr at esf=0");
    require(asr(esf(values, 1, 0).value) == 0, "asr at negative esf");
    require(esf(values, 1, 0).value < 0.0, "negative shift must yield esf<0");
    // Exhaustive trichotomy over all (legit, hijacked) pairs.
    for (const auto& [legit, lv] : values)
        for (const auto& [hijacked, hv] : values) {
            const EsfResult r = esf(values, legit, hijacked);
            if (r.undefined_legit_is_max) continue;
            if (hijacked == legit) require(r.value == 0.0, "trichotomy: invariant");
            else if (hv > lv) require(r.value > 0.0, "trichotomy: successful");
            else require(r.value < 0.0, "trichotomy: unsuccessful");
            require(asr(r.value) == (r.value > 0.0 ? 1 : 0), "asr iff esf>0");
        }
    return "exact on all synthetic pairs";
}

// ---------------------------------------------------------------------------
// Criterion 4: l0-energy correlation across a trained desk grid.
// ---------------------------------------------------------------------------

std::string check_l0_energy_link() {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset data = synth_blobs(512, 16, 4, 0.05, 8101);
    Splits s = split(data, SplitSpec{0.8, 0.1, 0.1, 8102});
    HyperSpace space{{1, 2, 3, 4, 5, 6}, {8, 16}, {0.1}};
    auto models = build_model_space(space, 16, 4, 8103);
    std::vector<double> l0s, energies;
    for (const auto& m : models) {
        Rng rng(mix_seed(m->config().seed, 0x7472));
        train_model(*m, s.train, TrainOptions{12, 32}, rng);
        l0s.push_back(l0_metric(*m, s.val));
        energies.push_back(energy_metric(*m, s.val, EnergyModel{1.0}));
    }
    const double r = pearson(l0s, energies);
    require(r > 0.9, "pearson(l0, energy) = " + fmt(r) + " <= 0.9");
    const double secs = elapsed_seconds(t0);
    require(secs < 300.0, "runtime " + fmt(secs) + "s exceeds 300s");
    return "12 models, pearson " + fmt(r) + ", " + fmt(secs) + "s";
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6: the attack itself, across independent seeds.
// ---------------------------------------------------------------------------

int attack_asr_for_seed(std::uint64_t master, Knowledge knowledge) {
    Dataset data = synth_blobs(512, 16, 4, 0.05, mix_seed(master, 1));
    Splits s = split(data, SplitSpec{0.8, 0.1, 0.1, mix_seed(master, 2)});

    HyperSpace space{{1, 2}, {8, 16}, {0.5, 0.005}};  // 8 victims
    auto victims = build_model_space(space, 16, 4, mix_seed(master, 3));
    for (const auto& m : victims) {
        Rng rng(mix_seed(m->config().seed, 0x7472));
        train_model(*m, s.train, TrainOptions{15, 32}, rng);
    }
    std::vector<std::shared_ptr<MLPModel>> attackers = victims;
    if (knowledge == Knowledge::BlackBox) {
        attackers = build_model_space(space, 16, 4, mix_seed(master, 4));
        for (const auto& m : attackers) {
            Rng rng(mix_seed(m->config().seed, 0x7472));
            train_model(*m, s.train, TrainOptions{15, 32}, rng);
        }
    }
    const ModelGrid victim_grid{Grouping::Global, "", victims};
    const ModelGrid attack_grid{Grouping::Global, "", attackers};

    AttackSetInputs set;
    set.knowledge = knowledge;
    set.victim_grid = &victim_grid;
    set.attack_grid = &attack_grid;
    set.metric = HijackMetricKind::Generalization;
    set.s_train = &s.train;
    set.s_val = &s.val;
    set.hvae_config = HVAEConfig{8, {32}, ReconKind::BCE, 0.01, 20, 32, mix_seed(master, 5)};
    const CraftResult craft = craft_attack_set(set);

    const auto eval_values = eval_metric_values(victim_grid, HijackMetricKind::Generalization,
                                                s.test, EnergyModel{}, 1);
    const AttackReport report =
        evaluate_cell(victim_grid, s.val, craft.poison, 1.0, mix_seed(master, 6), eval_values,
                      HijackMetricKind::Generalization, knowledge);
    require(report.error.empty(), "attack cell failed: " + report.error);
    return report.esf_undefined ? 0 : report.asr_value;
}

std::string check_whitebox_attack() {
    const auto t0 = std::chrono::steady_clock::now();
    int successes = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int hit = attack_asr_for_seed(mix_seed(0x5EED5, seed), Knowledge::WhiteBox);
        successes += hit;
        per_seed += hit ? "1" : "0";
    }
    const double secs = elapsed_seconds(t0);
    require(successes >= 4,
            "white-box generalization ASR=1 in only " + std::to_string(successes) + "/5 seeds");
    require(secs < 900.0, "runtime " + fmt(secs) + "s exceeds 900s");
    return "ASR per seed " + per_seed + " (" + std::to_string(successes) + "/5), " + fmt(secs) +
           "s";
}

std::string check_blackbox_attack() {
    const auto t0 = std::chrono::steady_clock::now();
    int successes = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int hit = attack_asr_for_seed(mix_seed(0xB1ACC, seed), Knowledge::BlackBox);
        successes += hit;
        per_seed += hit ? "1" : "0";
    }
    const double secs = elapsed_seconds(t0);
    require(successes >= 3,
            "black-box generalization ASR=1 in only " + std::to_string(successes) + "/5 seeds");
    require(secs < 900.0, "runtime " + fmt(secs) + "s exceeds 900s");
    return "ASR per seed " + per_seed + " (" + std::to_string(successes) + "/5), " + fmt(secs) +
           "s";
}

// ---------------------------------------------------------------------------
// Criterion 7: partial substitution sweep.
// ---------------------------------------------------------------------------

std::string check_partial_substitution() {
    const std::uint64_t master = 0x9A37;
    Dataset data = synth_blobs(512, 16, 4, 0.05, mix_seed(master, 1));
    Splits s = split(data, SplitSpec{0.8, 0.1, 0.1, mix_seed(master, 2)});
    HyperSpace space{{1, 2}, {8, 16}, {0.5, 0.005}};
    auto victims = build_model_space(space, 16, 4, mix_seed(master, 3));
    for (const auto& m : victims) {
        Rng rng(mix_seed(m->config().seed, 0x7472));
        train_model(*m, s.train, TrainOptions{15, 32}, rng);
    }
    const ModelGrid grid{Grouping::Global, "", victims};

    AttackSetInputs set;
    set.victim_grid = &grid;
    set.attack_grid = &grid;
    set.metric = HijackMetricKind::Generalization;
    set.s_train = &s.train;
    set.s_val = &s.val;
    set.hvae_config = HVAEConfig{8, {32}, ReconKind::BCE, 0.01, 20, 32, mix_seed(master, 5)};
    const CraftResult craft = craft_attack_set(set);
    const auto eval_values = eval_metric_values(grid, HijackMetricKind::Generalization, s.test,
                                                EnergyModel{}, 1);

    std::string details;
    for (double rate : {0.1, 0.2, 0.5, 0.8, 1.0}) {
        const AttackReport rep =
            evaluate_cell(grid, s.val, craft.poison, rate, mix_seed(master, 100 + rate * 10),
                          eval_values, HijackMetricKind::Generalization, Knowledge::WhiteBox);
        require(rep.error.empty(), "rate " + fmt(rate) + " failed: " + rep.error);
        require(!rep.esf_undefined, "rate " + fmt(rate) + " produced an undefined score");
        details += fmt(rate) + ":" + fmt(rep.esf_value) + " ";
    }
    const AttackReport clean =
        evaluate_cell(grid, s.val, craft.poison, 0.0, mix_seed(master, 99), eval_values,
                      HijackMetricKind::Generalization, Knowledge::WhiteBox);
    require(clean.esf_value == 0.0 && clean.hijacked_id == clean.legit_id,
            "rate 0 must leave the selection unchanged");
    return "esf per rate " + details + "| rate 0 -> 0";
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism and formats.
// ---------------------------------------------------------------------------

ExperimentConfig acceptance_config() {
    ExperimentConfig cfg;
    cfg.dataset = DatasetSpec{"synth_blobs", 200, 8, 3, 0.06, 9001, "", ""};
    cfg.split = SplitSpec{0.7, 0.15, 0.15, 9002, false};
    cfg.space = HyperSpace{{1, 2}, {8}, {0.4, 0.004}};
    cfg.training = TrainOptions{8, 16};
    cfg.groupings = {Grouping::Global, Grouping::ByLr};
    cfg.metrics = {HijackMetricKind::Generalization, HijackMetricKind::L0Norm};
    cfg.knowledge = {Knowledge::WhiteBox, Knowledge::BlackBox};
    cfg.rates = {0.5, 1.0};
    cfg.hvae = HVAEConfig{4, {16}, ReconKind::BCE, 0.01, 5, 16, 0};
    cfg.latency_repeats = 1;
    return cfg;
}

std::map<std::string, std::string> masked_snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), root).generic_string();
        std::string bytes = io::read_file(entry.path());
        const auto& masked = nondeterministic_columns(entry.path().filename().string());
        if (!masked.empty()) {
            const io::CsvFile csv = io::read_csv(entry.path());
            std::string rebuilt;
            for (const auto& c : csv.comments) rebuilt += c + "\n";
            for (std::size_t i = 0; i < csv.header.size(); ++i)
                rebuilt += csv.header[i] + (i + 1 < csv.header.size() ? "," : "\n");
            for (const auto& row : csv.rows)
                for (std::size_t i = 0; i < row.size(); ++i) {
                    const bool blank =
                        std::find(masked.begin(), masked.end(), csv.header[i]) != masked.end();
                    rebuilt += blank ? std::string("_") : row[i];
                    rebuilt += i + 1 < row.size() ? "," : "\n";
                }
            bytes = rebuilt;
        }
        files[rel] = std::move(bytes);
    }
    return files;
}

std::string check_determinism_and_formats() {
    // Two fresh run-alls must agree byte for byte outside wall-clock columns.
    const ExperimentConfig cfg = acceptance_config();
    const fs::path out_a = temp_dir("runA");
    const fs::path out_b = temp_dir("runB");
    Pipeline(cfg, out_a, 4).run_all();
    Pipeline(cfg, out_b, 1).run_all();
    const auto a = masked_snapshot(out_a);
    const auto b = masked_snapshot(out_b);
    require(a.size() == b.size(), "output trees differ in file count");
    std::size_t n_files = 0;
    for (const auto& [rel, bytes] : a) {
        require(b.count(rel) == 1, "missing file " + rel);
        require(bytes == b.at(rel), "file " + rel + " differs between runs");
        ++n_files;
    }

    // IDX fixture round-trip, byte-built.
    const fs::path dir = temp_dir("idx");
    {
        std::ofstream img(dir / "images", std::ios::binary);
        std::ofstream lab(dir / "labels", std::ios::binary);
        auto be32 = [](std::ofstream& os, std::uint32_t v) {
            const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                        static_cast<unsigned char>(v >> 16),
                                        static_cast<unsigned char>(v >> 8),
                                        static_cast<unsigned char>(v)};
            os.write(reinterpret_cast<const char*>(b), 4);
        };
        be32(img, 0x803);
        be32(img, 2);
        be32(img, 2);
        be32(img, 2);
        for (unsigned char px : {17, 34, 51, 68, 85, 102, 119, 136})
            img.put(static_cast<char>(px));
        be32(lab, 0x801);
        be32(lab, 2);
        lab.put(1);
        lab.put(0);
    }
    Dataset idx = load_idx(dir / "images", dir / "labels");
    require(idx.size() == 2 && idx.dim() == 4, "idx fixture shape");
    require(idx.samples.data[0] == 17.0 / 255.0, "idx pixel scaling");
    require(idx.labels == std::vector<int>{1, 0}, "idx labels");

    // Serialization round-trips, save -> load -> save, byte equality.
    Dataset data = synth_blobs(24, 5, 3, 0.1, 9102);
    save_dataset(dir / "d1.bin", data, 9102, 0xAB);
    save_dataset(dir / "d2.bin", load_dataset(dir / "d1.bin").data, 9102, 0xAB);
    require(io::read_file(dir / "d1.bin") == io::read_file(dir / "d2.bin"),
            "dataset round-trip");

    MLPModel model(HyperConfig{2, 6, 0.1, 9103}, 5, 3, 1);
    Rng mrng(9104);
    train_model(model, data, TrainOptions{3, 8}, mrng);
    save_model(dir / "m1.bin", model);
    save_model(dir / "m2.bin", *load_model(dir / "m1.bin"));
    require(io::read_file(dir / "m1.bin") == io::read_file(dir / "m2.bin"),
            "model round-trip");

    HVAEModel hvae(HVAEConfig{3, {8}, ReconKind::BCE, 0.01, 1, 8, 9105}, 5, 3);
    save_hvae(dir / "h1.bin", hvae, 0xCD);
    save_hvae(dir / "h2.bin", *load_hvae(dir / "h1.bin").model, 0xCD);
    require(io::read_file(dir / "h1.bin") == io::read_file(dir / "h2.bin"), "hvae round-trip");

    Rng prng(9106);
    PoisonSet poison = generate_poison(
        hvae, 9, prng, PoisonProvenance{0xEF, 9106, "global", HijackMetricKind::Energy});
    save_poison(dir / "p1.bin", poison);
    save_poison(dir / "p2.bin", load_poison(dir / "p1.bin"));
    require(io::read_file(dir / "p1.bin") == io::read_file(dir / "p2.bin"),
            "poison round-trip");

    return std::to_string(n_files) + " pipeline files identical; all round-trips bit-exact";
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness (finite differences)", check_gradients},
        {2, "formula oracles (alpha, hj_cost, selection, esf, asr, impact)",
         check_formula_oracles},
        {3, "esf trichotomy and endpoints", check_esf_endpoints},
        {4, "l0-energy correlation on a trained grid", check_l0_energy_link},
        {5, "white-box full-substitution generalization attack", check_whitebox_attack},
        {6, "black-box transferability", check_blackbox_attack},
        {7, "partial substitution sweep", check_partial_substitution},
        {8, "determinism and formats", check_determinism_and_formats},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        try {
            const std::string detail = c.run();
            std::printf("[PASS] criterion %d: %s — %s\n", c.number, c.description.c_str(),
                        detail.c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] criterion %d: %s — %s\n", c.number, c.description.c_str(),
                        e.what());
        }
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
        return 0;
    }
    std::printf("acceptance: %d criteria failed\n", failures);
    return 1;
}
