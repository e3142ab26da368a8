#include "hijacklab/hvae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"

namespace hijacklab {

namespace {

constexpr std::uint64_t kInitStream = 0x68766165;  // "hvae"

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.data) v = limit * (2.0 * rng.uniform() - 1.0);
    return w;
}

DenseLayer make_layer(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return DenseLayer{Parameter(name + ".w", glorot_uniform(in, out, rng)),
                      Parameter(name + ".b", Tensor::zeros({out}))};
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
    Tensor c = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a.data[i * k + kk];
            for (std::size_t j = 0; j < p; ++j) c.data[i * p + j] += av * b.data[kk * p + j];
        }
    return c;
}

Tensor dense_plain(const Tensor& x, const DenseLayer& layer) {
    Tensor h = matmul_plain(x, layer.weight.value);
    const std::size_t rows = h.shape[0], cols = h.shape[1];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) h.data[r * cols + c] += layer.bias.value.data[c];
    return h;
}

Tensor concat_cols_plain(const Tensor& a, const Tensor& b) {
    const std::size_t rows = a.shape[0], ca = a.shape[1], cb = b.shape[1];
    Tensor c = Tensor::zeros({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(&a.data[r * ca], ca, &c.data[r * (ca + cb)]);
        std::copy_n(&b.data[r * cb], cb, &c.data[r * (ca + cb) + ca]);
    }
    return c;
}

}  // namespace

const char* recon_kind_name(ReconKind kind) {
    return kind == ReconKind::BCE ? "bce" : "mse";
}

ReconKind recon_kind_from_name(const std::string& name) {
    if (name == "bce") return ReconKind::BCE;
    if (name == "mse") return ReconKind::MSE;
    throw ContractError("unknown reconstruction kind '" + name + "'");
}

std::uint64_t HVAEConfig::hash() const {
    std::ostringstream os;
    os << latent_dim << "|";
    for (int h : hidden) os << h << ",";
    os << "|" << recon_kind_name(recon) << "|" << io::format_double(learning_rate) << "|"
       << epochs << "|" << batch_size << "|" << seed;
    return fnv1a64(os.str());
}

HVAEModel::HVAEModel(HVAEConfig config, int input_dim, int n_classes)
    : config_(std::move(config)), input_dim_(input_dim), n_classes_(n_classes) {
    if (config_.latent_dim < 1) throw ContractError("HVAEModel: latent_dim must be >= 1");
    if (config_.hidden.empty()) throw ContractError("HVAEModel: need at least one hidden layer");
    for (int h : config_.hidden)
        if (h < 1) throw ContractError("HVAEModel: hidden widths must be >= 1");
    if (input_dim < 1 || n_classes < 2)
        throw ContractError("HVAEModel: need input_dim >= 1 and n_classes >= 2");

    Rng rng(mix_seed(config_.seed, kInitStream));
    const std::size_t latent = static_cast<std::size_t>(config_.latent_dim);
    const std::size_t k = static_cast<std::size_t>(n_classes);

    std::size_t in = static_cast<std::size_t>(input_dim) + k;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        const std::size_t width = static_cast<std::size_t>(config_.hidden[l]);
        enc_hidden_.push_back(make_layer("enc" + std::to_string(l), in, width, rng));
        in = width;
    }
    mu_head_ = make_layer("mu", in, latent, rng);
    logvar_head_ = make_layer("logvar", in, latent, rng);

    in = latent + k;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        const std::size_t width = static_cast<std::size_t>(config_.hidden[l]);
        dec_hidden_.push_back(make_layer("dec" + std::to_string(l), in, width, rng));
        in = width;
    }
    out_layer_ = make_layer("out", in, static_cast<std::size_t>(input_dim), rng);
}

std::vector<Parameter*> HVAEModel::parameters() {
    std::vector<Parameter*> out;
    for (DenseLayer& l : enc_hidden_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    out.push_back(&mu_head_.weight);
    out.push_back(&mu_head_.bias);
    out.push_back(&logvar_head_.weight);
    out.push_back(&logvar_head_.bias);
    for (DenseLayer& l : dec_hidden_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    out.push_back(&out_layer_.weight);
    out.push_back(&out_layer_.bias);
    return out;
}

Tensor onehot(const std::vector<int>& labels, int n_classes) {
    Tensor t = Tensor::zeros({labels.size(), static_cast<std::size_t>(n_classes)});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ContractError("onehot: label " + std::to_string(labels[i]) + " outside [0, " +
                                std::to_string(n_classes) + ")");
        t.data[i * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(labels[i])] =
            1.0;
    }
    return t;
}

HVAEModel::EncodeResult HVAEModel::encode(const Tensor& x, const std::vector<int>& labels) const {
    Tensor h = concat_cols_plain(x, onehot(labels, n_classes_));
    for (const DenseLayer& l : enc_hidden_) {
        h = dense_plain(h, l);
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    return EncodeResult{dense_plain(h, mu_head_), dense_plain(h, logvar_head_)};
}

Tensor HVAEModel::decode(const Tensor& z, const std::vector<int>& labels) const {
    Tensor h = concat_cols_plain(z, onehot(labels, n_classes_));
    for (const DenseLayer& l : dec_hidden_) {
        h = dense_plain(h, l);
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    Tensor out = dense_plain(h, out_layer_);
    if (config_.recon == ReconKind::BCE)
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

HVAEModel::TapeEncode HVAEModel::encode_on_tape(Tape& tape, Value x_with_labels) {
    Value h = x_with_labels;
    for (DenseLayer& l : enc_hidden_)
        h = tape.relu(tape.add(tape.matmul(h, tape.param(l.weight)), tape.param(l.bias)));
    return TapeEncode{
        tape.add(tape.matmul(h, tape.param(mu_head_.weight)), tape.param(mu_head_.bias)),
        tape.add(tape.matmul(h, tape.param(logvar_head_.weight)), tape.param(logvar_head_.bias))};
}

Value HVAEModel::decode_logits_on_tape(Tape& tape, Value z_with_labels) {
    Value h = z_with_labels;
    for (DenseLayer& l : dec_hidden_)
        h = tape.relu(tape.add(tape.matmul(h, tape.param(l.weight)), tape.param(l.bias)));
    return tape.add(tape.matmul(h, tape.param(out_layer_.weight)), tape.param(out_layer_.bias));
}

HvaeNoise draw_hvae_noise(const HVAEModel& hvae, std::size_t batch_size, Rng& rng) {
    const std::size_t latent = static_cast<std::size_t>(hvae.config().latent_dim);
    HvaeNoise noise;
    noise.encoder_eps = sample_gaussian({batch_size, latent}, rng);
    noise.gen_latent = sample_gaussian({batch_size, latent}, rng);
    noise.gen_labels.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i)
        noise.gen_labels.push_back(
            static_cast<int>(rng.below(static_cast<std::uint64_t>(hvae.n_classes()))));
    return noise;
}

HvaeForward hvae_forward_loss(HVAEModel& hvae, const Tensor& batch_x,
                              const std::vector<int>& batch_y, const MetricTable& alpha_table,
                              const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                              const HvaeNoise& noise) {
    if (batch_y.empty()) throw ContractError("hvae_forward_loss: empty batch");
    if (attack_models.empty()) throw ContractError("hvae_forward_loss: no attack models");
    for (const auto& m : attack_models)
        if (!alpha_table.alphas.count(m->id()))
            throw ContractError("hvae_forward_loss: no alpha entry for model id " +
                                std::to_string(m->id()));

    const std::size_t batch = batch_y.size();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    HvaeForward fw;
    Tape& t = fw.tape;

    // Reconstruction path: encode, reparameterize, decode.
    Value x = t.input(batch_x);
    Value x_in = t.concat_cols(x, t.input(onehot(batch_y, hvae.n_classes())));
    auto [mu, logvar] = hvae.encode_on_tape(t, x_in);
    Value sigma = t.exp(t.scale(logvar, 0.5));
    Value z = t.add(mu, t.mul(sigma, t.input(noise.encoder_eps)));
    Value z_in = t.concat_cols(z, t.input(onehot(batch_y, hvae.n_classes())));
    Value recon_logits = hvae.decode_logits_on_tape(t, z_in);

    Value l_rec;
    if (hvae.config().recon == ReconKind::BCE) {
        l_rec = t.scale(t.sum_all(t.bce_with_logits(recon_logits, batch_x)), inv_batch);
    } else {
        Value diff = t.sub(recon_logits, x);
        l_rec = t.scale(t.sum_all(t.mul(diff, diff)), inv_batch);
    }

    // Closed-form Gaussian KL against the standard normal prior.
    Value kl_terms = t.sub(t.sub(t.add_scalar(logvar, 1.0), t.mul(mu, mu)), t.exp(logvar));
    Value l_kld = t.scale(t.sum_all(kl_terms), -0.5 * inv_batch);

    // Generation path: fresh latents, uniform labels, decode.
    Value z_gen = t.input(noise.gen_latent);
    Value zy_gen = t.concat_cols(z_gen, t.input(onehot(noise.gen_labels, hvae.n_classes())));
    Value gen_logits = hvae.decode_logits_on_tape(t, zy_gen);
    Value gen_samples =
        hvae.config().recon == ReconKind::BCE ? t.sigmoid(gen_logits) : gen_logits;

    // Penalty-weighted mean validation loss of the frozen victims on the
    // generated batch; iteration order is the model vector order.
    Value weighted_sum = t.input(Tensor::scalar(0.0));
    for (const auto& model : attack_models) {
        Value logits = model->forward_frozen(t, gen_samples);
        Value ce = t.softmax_cross_entropy(logits, noise.gen_labels);
        weighted_sum = t.add(weighted_sum, t.scale(ce, alpha_table.alphas.at(model->id())));
    }
    Value hj_cost = t.scale(weighted_sum, 1.0 / static_cast<double>(attack_models.size()));

    Value gap = t.sub(t.add(l_rec, l_kld), hj_cost);
    fw.total = t.mul(gap, gap);

    fw.parts.l_rec = t.scalar(l_rec);
    fw.parts.l_kld = t.scalar(l_kld);
    fw.parts.hj_cost = t.scalar(hj_cost);
    fw.parts.total = t.scalar(fw.total);
    fw.generated.samples = t.value(gen_samples);
    fw.generated.labels = noise.gen_labels;
    return fw;
}

HvaeForward hvae_forward_loss(HVAEModel& hvae, const Tensor& batch_x,
                              const std::vector<int>& batch_y, const MetricTable& alpha_table,
                              const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                              Rng& rng) {
    return hvae_forward_loss(hvae, batch_x, batch_y, alpha_table, attack_models,
                             draw_hvae_noise(hvae, batch_y.size(), rng));
}

std::vector<LossBreakdown> train_hvae(HVAEModel& hvae, const Dataset& train,
                                      const MetricTable& alpha_table,
                                      const std::vector<std::shared_ptr<MLPModel>>& attack_models,
                                      int epochs, int batch_size, Rng& rng) {
    if (train.size() == 0) throw ContractError("train_hvae: empty training set");
    if (epochs < 0) throw ContractError("train_hvae: negative epochs");
    if (batch_size < 1) throw ContractError("train_hvae: batch_size must be >= 1");

    const double lr = hvae.config().learning_rate;
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<LossBreakdown> log;
    log.reserve(static_cast<std::size_t>(epochs));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        LossBreakdown sums;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t end = std::min(n, start + batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            Dataset batch = train.subset(idx);
            try {
                HvaeForward fw = hvae_forward_loss(hvae, batch.samples, batch.labels,
                                                   alpha_table, attack_models, rng);
                const double w = static_cast<double>(idx.size());
                sums.l_rec += fw.parts.l_rec * w;
                sums.l_kld += fw.parts.l_kld * w;
                sums.hj_cost += fw.parts.hj_cost * w;
                sums.total += fw.parts.total * w;
                GradMap grads = fw.tape.backward(fw.total);
                for (Parameter* p : hvae.parameters()) {
                    p->zero_grad();
                    if (auto it = grads.find(p->name); it != grads.end()) p->grad = it->second;
                    for (std::size_t i = 0; i < p->value.numel(); ++i)
                        p->value.data[i] -= lr * p->grad.data[i];
                }
            } catch (const NumericError& e) {
                throw NumericError("train_hvae: " + std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch));
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        log.push_back(LossBreakdown{sums.l_rec * inv_n, sums.l_kld * inv_n, sums.hj_cost * inv_n,
                                    sums.total * inv_n});
    }
    return log;
}

PoisonSet generate_poison(const HVAEModel& hvae, std::size_t n, Rng& rng,
                          PoisonProvenance provenance) {
    PoisonSet out;
    out.n_classes = hvae.n_classes();
    out.provenance = std::move(provenance);
    out.labels.reserve(n);
    Tensor z = sample_gaussian({n, static_cast<std::size_t>(hvae.config().latent_dim)}, rng);
    for (std::size_t i = 0; i < n; ++i)
        out.labels.push_back(
            static_cast<int>(rng.below(static_cast<std::uint64_t>(hvae.n_classes()))));
    out.samples = n > 0 ? hvae.decode(z, out.labels)
                        : Tensor::zeros({0, static_cast<std::size_t>(hvae.input_dim())});
    return out;
}

double mean_recon_loss(const HVAEModel& hvae, const Dataset& data) {
    if (data.size() == 0) throw ContractError("mean_recon_loss: empty dataset");
    const auto enc = hvae.encode(data.samples, data.labels);
    const Tensor recon = hvae.decode(enc.mu, data.labels);
    const std::size_t n = data.size();
    double total = 0.0;
    if (hvae.config().recon == ReconKind::BCE) {
        for (std::size_t i = 0; i < recon.numel(); ++i) {
            const double p = std::clamp(recon.data[i], 1e-12, 1.0 - 1e-12);
            const double x = data.samples.data[i];
            total += -(x * std::log(p) + (1.0 - x) * std::log(1.0 - p));
        }
    } else {
        for (std::size_t i = 0; i < recon.numel(); ++i) {
            const double d = recon.data[i] - data.samples.data[i];
            total += d * d;
        }
    }
    return total / static_cast<double>(n);
}

namespace {

void write_layer(std::ostream& os, const DenseLayer& l) {
    for (double v : l.weight.value.data) io::write_f64(os, v);
    for (double v : l.bias.value.data) io::write_f64(os, v);
}

void read_layer(std::istream& is, DenseLayer& l) {
    for (double& v : l.weight.value.data) v = io::read_f64(is, "hvae weight");
    for (double& v : l.bias.value.data) v = io::read_f64(is, "hvae bias");
}

}  // namespace

void save_hvae(const std::filesystem::path& path, const HVAEModel& hvae,
               std::uint64_t config_hash) {
    std::ostringstream os(std::ios::binary);
    io::write_magic(os, "MSHV");
    io::write_u32(os, 1);  // version
    io::write_u32(os, static_cast<std::uint32_t>(hvae.input_dim()));
    io::write_u32(os, static_cast<std::uint32_t>(hvae.n_classes()));
    io::write_u32(os, static_cast<std::uint32_t>(hvae.config().latent_dim));
    io::write_u32(os, static_cast<std::uint32_t>(hvae.config().hidden.size()));
    for (int h : hvae.config().hidden) io::write_u32(os, static_cast<std::uint32_t>(h));
    io::write_u32(os, hvae.config().recon == ReconKind::BCE ? 0 : 1);
    io::write_f64(os, hvae.config().learning_rate);
    io::write_u64(os, hvae.config().seed);
    io::write_u64(os, config_hash);
    for (const DenseLayer& l : hvae.encoder_hidden()) write_layer(os, l);
    write_layer(os, hvae.mu_head());
    write_layer(os, hvae.logvar_head());
    for (const DenseLayer& l : hvae.decoder_hidden()) write_layer(os, l);
    write_layer(os, hvae.output_layer());
    io::atomic_write(path, os.str());
}

LoadedHvae load_hvae(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::expect_magic(is, "MSHV", "hvae");
    const std::uint32_t version = io::read_u32(is, "hvae version");
    if (version != 1) throw ParseError("unsupported hvae version " + std::to_string(version));
    const int input_dim = static_cast<int>(io::read_u32(is, "hvae input_dim"));
    const int n_classes = static_cast<int>(io::read_u32(is, "hvae n_classes"));
    HVAEConfig cfg;
    cfg.latent_dim = static_cast<int>(io::read_u32(is, "hvae latent_dim"));
    const std::uint32_t n_hidden = io::read_u32(is, "hvae hidden count");
    cfg.hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i)
        cfg.hidden.push_back(static_cast<int>(io::read_u32(is, "hvae hidden width")));
    cfg.recon = io::read_u32(is, "hvae recon kind") == 0 ? ReconKind::BCE : ReconKind::MSE;
    cfg.learning_rate = io::read_f64(is, "hvae learning_rate");
    cfg.seed = io::read_u64(is, "hvae seed");
    LoadedHvae out;
    out.config_hash = io::read_u64(is, "hvae config hash");
    out.model = std::make_shared<HVAEModel>(cfg, input_dim, n_classes);
    for (DenseLayer& l : out.model->encoder_hidden()) read_layer(is, l);
    read_layer(is, out.model->mu_head());
    read_layer(is, out.model->logvar_head());
    for (DenseLayer& l : out.model->decoder_hidden()) read_layer(is, l);
    read_layer(is, out.model->output_layer());
    return out;
}

void save_poison(const std::filesystem::path& path, const PoisonSet& poison) {
    std::ostringstream os(std::ios::binary);
    io::write_magic(os, "MSHP");
    io::write_u32(os, 1);  // version
    io::write_u64(os, poison.size());
    io::write_u32(os, static_cast<std::uint32_t>(poison.samples.rank() == 2
                                                     ? poison.samples.shape[1]
                                                     : 0));
    io::write_u32(os, static_cast<std::uint32_t>(poison.n_classes));
    io::write_u64(os, poison.provenance.seed);
    io::write_u64(os, poison.provenance.config_hash);
    io::write_u32(os, static_cast<std::uint32_t>(poison.provenance.grid_id.size()));
    os.write(poison.provenance.grid_id.data(),
             static_cast<std::streamsize>(poison.provenance.grid_id.size()));
    io::write_u32(os, static_cast<std::uint32_t>(poison.provenance.metric));
    for (double v : poison.samples.data) io::write_f64(os, v);
    for (int y : poison.labels) io::write_u16(os, static_cast<std::uint16_t>(y));
    io::atomic_write(path, os.str());
}

PoisonSet load_poison(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::expect_magic(is, "MSHP", "poison set");
    const std::uint32_t version = io::read_u32(is, "poison version");
    if (version != 1) throw ParseError("unsupported poison version " + std::to_string(version));
    PoisonSet out;
    const std::uint64_t n = io::read_u64(is, "poison size");
    const std::uint32_t d = io::read_u32(is, "poison dim");
    out.n_classes = static_cast<int>(io::read_u32(is, "poison classes"));
    out.provenance.seed = io::read_u64(is, "poison seed");
    out.provenance.config_hash = io::read_u64(is, "poison config hash");
    const std::uint32_t id_len = io::read_u32(is, "poison grid id length");
    out.provenance.grid_id.resize(id_len);
    if (id_len > 0 && !is.read(out.provenance.grid_id.data(), id_len))
        throw ParseError("truncated poison grid id");
    out.provenance.metric =
        static_cast<HijackMetricKind>(io::read_u32(is, "poison metric kind"));
    out.samples = Tensor::zeros({n, d});
    for (double& v : out.samples.data) v = io::read_f64(is, "poison sample");
    out.labels.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        out.labels.push_back(io::read_u16(is, "poison label"));
    return out;
}

}  // namespace hijacklab
