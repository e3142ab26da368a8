#include "hijacklab/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/rng.hpp"

namespace hijacklab {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.data) v = limit * (2.0 * rng.uniform() - 1.0);
    return w;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
    Tensor c = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * p];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = &b.data[kk * p];
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

void add_bias_inplace(Tensor& m, const Tensor& bias) {
    const std::size_t rows = m.shape[0], cols = m.shape[1];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m.data[r * cols + c] += bias.data[c];
}

}  // namespace

MLPModel::MLPModel(HyperConfig config, int input_dim, int n_classes, int model_id)
    : config_(config), input_dim_(input_dim), n_classes_(n_classes), model_id_(model_id) {
    if (config.n_layers < 1) throw ContractError("MLPModel: n_layers must be >= 1");
    if (config.n_neurons < 1) throw ContractError("MLPModel: n_neurons must be >= 1");
    if (input_dim < 1 || n_classes < 2)
        throw ContractError("MLPModel: need input_dim >= 1 and n_classes >= 2");

    Rng rng(mix_seed(config.seed, kInitStream));
    std::size_t in = static_cast<std::size_t>(input_dim);
    const std::size_t width = static_cast<std::size_t>(config.n_neurons);
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string prefix = "L" + std::to_string(l);
        layers_.push_back(DenseLayer{Parameter(prefix + ".w", glorot_uniform(in, width, rng)),
                                     Parameter(prefix + ".b", Tensor::zeros({width}))});
        in = width;
    }
    const std::string prefix = "L" + std::to_string(config.n_layers);
    layers_.push_back(DenseLayer{
        Parameter(prefix + ".w", glorot_uniform(in, static_cast<std::size_t>(n_classes), rng)),
        Parameter(prefix + ".b", Tensor::zeros({static_cast<std::size_t>(n_classes)}))});
}

std::vector<Parameter*> MLPModel::parameters() {
    std::vector<Parameter*> out;
    for (DenseLayer& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

void MLPModel::check_input(const Tensor& x) const {
    if (x.rank() != 2 || x.shape[1] != static_cast<std::size_t>(input_dim_))
        throw ContractError("MLPModel: input " + x.shape_str() + " does not match input_dim " +
                            std::to_string(input_dim_));
}

Tensor MLPModel::forward(const Tensor& x) const {
    check_input(x);
    Tensor h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        h = matmul_plain(h, layers_[l].weight.value);
        add_bias_inplace(h, layers_[l].bias.value);
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    Tensor logits = matmul_plain(h, layers_.back().weight.value);
    add_bias_inplace(logits, layers_.back().bias.value);
    return logits;
}

MLPModel::ForwardTrace MLPModel::forward_with_activations(const Tensor& x) const {
    check_input(x);
    ForwardTrace trace;
    Tensor h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        h = matmul_plain(h, layers_[l].weight.value);
        add_bias_inplace(h, layers_[l].bias.value);
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
        std::size_t count = 0;
        for (double v : h.data)
            if (v > 0.0) ++count;
        trace.relu_counts.push_back(count);
        trace.hidden.push_back(h);
    }
    trace.logits = matmul_plain(h, layers_.back().weight.value);
    add_bias_inplace(trace.logits, layers_.back().bias.value);
    return trace;
}

Value MLPModel::forward_on_tape(Tape& tape, Value x) {
    Value h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
        h = tape.relu(tape.add(tape.matmul(h, tape.param(layers_[l].weight)),
                               tape.param(layers_[l].bias)));
    return tape.add(tape.matmul(h, tape.param(layers_.back().weight)),
                    tape.param(layers_.back().bias));
}

Value MLPModel::forward_frozen(Tape& tape, Value x) const {
    Value h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
        h = tape.relu(tape.add(tape.matmul(h, tape.input(layers_[l].weight.value)),
                               tape.input(layers_[l].bias.value)));
    return tape.add(tape.matmul(h, tape.input(layers_.back().weight.value)),
                    tape.input(layers_.back().bias.value));
}

long long MLPModel::macs_per_sample() const {
    long long macs = 0;
    for (const DenseLayer& l : layers_)
        macs += static_cast<long long>(l.weight.value.shape[0]) *
                static_cast<long long>(l.weight.value.shape[1]);
    return macs;
}

double softmax_ce_mean(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t rows = logits.shape[0], cols = logits.shape[1];
    if (rows == 0) throw ContractError("softmax_ce_mean: empty batch");
    if (labels.size() != rows)
        throw ContractError("softmax_ce_mean: label count mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &logits.data[r * cols];
        double mx = row[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(row[c] - mx);
        total += mx + std::log(sum) - row[static_cast<std::size_t>(labels[r])];
    }
    return total / static_cast<double>(rows);
}

double val_loss(const MLPModel& model, const Dataset& data) {
    if (data.size() == 0) throw ContractError("val_loss: empty dataset");
    return softmax_ce_mean(model.forward(data.samples), data.labels);
}

const char* grouping_name(Grouping g) {
    switch (g) {
        case Grouping::Global: return "global";
        case Grouping::ByLr: return "by_lr";
        case Grouping::ByLrAndNeurons: return "by_lr_and_neurons";
    }
    return "?";
}

Grouping grouping_from_name(const std::string& name) {
    if (name == "global") return Grouping::Global;
    if (name == "by_lr") return Grouping::ByLr;
    if (name == "by_lr_and_neurons") return Grouping::ByLrAndNeurons;
    throw ContractError("unknown grouping '" + name + "'");
}

std::vector<std::shared_ptr<MLPModel>> build_model_space(const HyperSpace& space, int input_dim,
                                                         int n_classes,
                                                         std::uint64_t base_seed) {
    if (space.layers.empty() || space.neurons.empty() || space.learning_rates.empty())
        throw ContractError("build_model_space: every hyperparameter list must be non-empty");
    std::vector<std::shared_ptr<MLPModel>> models;
    int id = 0;
    for (int layers : space.layers)
        for (int neurons : space.neurons)
            for (double lr : space.learning_rates) {
                HyperConfig cfg{layers, neurons, lr, mix_seed(base_seed, static_cast<std::uint64_t>(id))};
                models.push_back(std::make_shared<MLPModel>(cfg, input_dim, n_classes, id));
                ++id;
            }
    return models;
}

std::vector<ModelGrid> partition_grid(const std::vector<std::shared_ptr<MLPModel>>& models,
                                      Grouping grouping) {
    if (models.empty()) throw ContractError("partition_grid: no models");
    std::vector<ModelGrid> grids;
    auto lr_key = [](double lr) { return "lr=" + io::format_double(lr); };

    switch (grouping) {
        case Grouping::Global:
            grids.push_back(ModelGrid{grouping, "", models});
            break;
        case Grouping::ByLr: {
            std::vector<double> lrs;
            for (const auto& m : models)
                if (std::find(lrs.begin(), lrs.end(), m->config().learning_rate) == lrs.end())
                    lrs.push_back(m->config().learning_rate);
            for (double lr : lrs) {
                ModelGrid g{grouping, lr_key(lr), {}};
                for (const auto& m : models)
                    if (m->config().learning_rate == lr) g.models.push_back(m);
                grids.push_back(std::move(g));
            }
            break;
        }
        case Grouping::ByLrAndNeurons: {
            std::vector<std::pair<double, int>> keys;
            for (const auto& m : models) {
                std::pair<double, int> key{m->config().learning_rate, m->config().n_neurons};
                if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
            }
            std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
                return a.first != b.first ? a.first < b.first : a.second < b.second;
            });
            for (const auto& [lr, neurons] : keys) {
                ModelGrid g{grouping, lr_key(lr) + ";neurons=" + std::to_string(neurons), {}};
                for (const auto& m : models)
                    if (m->config().learning_rate == lr && m->config().n_neurons == neurons)
                        g.models.push_back(m);
                grids.push_back(std::move(g));
            }
            break;
        }
    }
    return grids;
}

std::vector<ModelGrid> build_grid(const HyperSpace& space, Grouping grouping, int input_dim,
                                  int n_classes, std::uint64_t base_seed) {
    return partition_grid(build_model_space(space, input_dim, n_classes, base_seed), grouping);
}

TrainReport train_model(MLPModel& model, const Dataset& train, const TrainOptions& options,
                        Rng& rng) {
    if (options.epochs < 0) throw ContractError("train_model: negative epochs");
    if (options.batch_size < 1) throw ContractError("train_model: batch_size must be >= 1");
    train.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const double lr = model.config().learning_rate;
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    report.config = model.config();
    report.epochs = options.epochs;

    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        double total_ce = 0.0;
        for (std::size_t start = 0; start < n; start += options.batch_size) {
            const std::size_t end = std::min(n, start + options.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            Dataset batch = train.subset(idx);
            try {
                Tape tape;
                Value logits = model.forward_on_tape(tape, tape.input(batch.samples));
                Value loss = tape.softmax_cross_entropy(logits, batch.labels);
                total_ce += tape.scalar(loss) * static_cast<double>(idx.size());
                GradMap grads = tape.backward(loss);
                for (Parameter* p : model.parameters()) {
                    p->zero_grad();
                    if (auto it = grads.find(p->name); it != grads.end()) p->grad = it->second;
                    for (std::size_t i = 0; i < p->value.numel(); ++i)
                        p->value.data[i] -= lr * p->grad.data[i];
                }
            } catch (const NumericError& e) {
                throw NumericError("train_model: " + std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch) + " batch " +
                                   std::to_string(start / options.batch_size));
            }
        }
        epoch_loss = total_ce / static_cast<double>(n);
    }
    report.final_train_loss = options.epochs > 0 ? epoch_loss : val_loss(model, train);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void save_model(const std::filesystem::path& path, const MLPModel& model) {
    std::ostringstream os(std::ios::binary);
    io::write_magic(os, "MSHJ");
    io::write_u32(os, 1);  // version
    io::write_u32(os, static_cast<std::uint32_t>(model.input_dim()));
    io::write_u32(os, static_cast<std::uint32_t>(model.n_classes()));
    io::write_u32(os, static_cast<std::uint32_t>(model.config().n_layers));
    io::write_u32(os, static_cast<std::uint32_t>(model.config().n_neurons));
    io::write_f64(os, model.config().learning_rate);
    io::write_u64(os, model.config().seed);
    for (const DenseLayer& l : model.layers()) {
        for (double v : l.weight.value.data) io::write_f64(os, v);
        for (double v : l.bias.value.data) io::write_f64(os, v);
    }
    io::atomic_write(path, os.str());
}

std::shared_ptr<MLPModel> load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::expect_magic(is, "MSHJ", "model");
    const std::uint32_t version = io::read_u32(is, "model version");
    if (version != 1) throw ParseError("unsupported model version " + std::to_string(version));
    const int input_dim = static_cast<int>(io::read_u32(is, "model input_dim"));
    const int n_classes = static_cast<int>(io::read_u32(is, "model n_classes"));
    HyperConfig cfg;
    cfg.n_layers = static_cast<int>(io::read_u32(is, "model n_layers"));
    cfg.n_neurons = static_cast<int>(io::read_u32(is, "model n_neurons"));
    cfg.learning_rate = io::read_f64(is, "model learning_rate");
    cfg.seed = io::read_u64(is, "model seed");
    auto model = std::make_shared<MLPModel>(cfg, input_dim, n_classes);
    for (DenseLayer& l : model->layers()) {
        for (double& v : l.weight.value.data) v = io::read_f64(is, "model weight");
        for (double& v : l.bias.value.data) v = io::read_f64(is, "model bias");
    }
    return model;
}

}  // namespace hijacklab
