#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "hijacklab/dataset.hpp"
#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/mlp.hpp"
#include "hijacklab/rng.hpp"

using namespace hijacklab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("hijacklab_mlp_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

void zero_params(MLPModel& m) {
    for (Parameter* p : m.parameters())
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

std::vector<double> flatten_params(MLPModel& m) {
    std::vector<double> out;
    for (Parameter* p : m.parameters())
        out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    return out;
}

}  // namespace

TEST_CASE("grid cardinalities match the benchmark table") {
    HyperSpace space;
    space.layers = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    space.neurons = {32, 64, 128};
    space.learning_rates = {0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05};

    auto global = build_grid(space, Grouping::Global, 4, 10, 1);
    REQUIRE(global.size() == 1);
    CHECK(global[0].models.size() == 180);

    auto by_lr = build_grid(space, Grouping::ByLr, 4, 10, 1);
    REQUIRE(by_lr.size() == 6);
    for (const auto& g : by_lr) CHECK(g.models.size() == 30);

    auto by_both = build_grid(space, Grouping::ByLrAndNeurons, 4, 10, 1);
    REQUIRE(by_both.size() == 18);
    for (const auto& g : by_both) CHECK(g.models.size() == 10);
}

TEST_CASE("singleton space yields a single one-model grid") {
    HyperSpace space{{1}, {8}, {0.01}};
    auto grids = build_grid(space, Grouping::Global, 4, 2, 1);
    REQUIRE(grids.size() == 1);
    CHECK(grids[0].models.size() == 1);
}

TEST_CASE("grid cardinalities follow the closed-form products on random spaces") {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        HyperSpace space;
        const std::size_t nl = 1 + rng.below(5);
        const std::size_t nn = 1 + rng.below(4);
        const std::size_t nr = 1 + rng.below(4);
        for (std::size_t i = 0; i < nl; ++i) space.layers.push_back(1 + static_cast<int>(i));
        for (std::size_t i = 0; i < nn; ++i) space.neurons.push_back(4 << i);
        for (std::size_t i = 0; i < nr; ++i)
            space.learning_rates.push_back(0.001 * static_cast<double>(i + 1));

        CHECK(build_grid(space, Grouping::Global, 3, 2, trial)[0].models.size() == nl * nn * nr);
        auto by_lr = build_grid(space, Grouping::ByLr, 3, 2, trial);
        CHECK(by_lr.size() == nr);
        for (const auto& g : by_lr) CHECK(g.models.size() == nl * nn);
        auto by_both = build_grid(space, Grouping::ByLrAndNeurons, 3, 2, trial);
        CHECK(by_both.size() == nr * nn);
        for (const auto& g : by_both) CHECK(g.models.size() == nl);
    }
}

TEST_CASE("empty hyperparameter lists are rejected") {
    CHECK_THROWS_AS(build_grid(HyperSpace{{}, {8}, {0.1}}, Grouping::Global, 4, 2, 1),
                    ContractError);
}

TEST_CASE("identical seeds give bit-identical training runs") {
    Dataset d = synth_blobs(64, 4, 2, 0.1, 21);
    HyperConfig cfg{2, 8, 0.1, 555};
    MLPModel a(cfg, 4, 2), b(cfg, 4, 2);
    Rng ra(999), rb(999);
    train_model(a, d, TrainOptions{5, 16}, ra);
    train_model(b, d, TrainOptions{5, 16}, rb);
    CHECK(flatten_params(a) == flatten_params(b));
}

TEST_CASE("zero epochs and zero learning rate leave parameters unchanged") {
    Dataset d = synth_blobs(32, 4, 2, 0.1, 3);
    MLPModel m(HyperConfig{1, 8, 0.1, 42}, 4, 2);
    const std::vector<double> before = flatten_params(m);
    Rng rng(1);
    TrainReport r0 = train_model(m, d, TrainOptions{0, 16}, rng);
    CHECK(r0.epochs == 0);
    CHECK(flatten_params(m) == before);

    MLPModel z(HyperConfig{1, 8, 0.0, 42}, 4, 2);
    const std::vector<double> zbefore = flatten_params(z);
    train_model(z, d, TrainOptions{7, 16}, rng);
    CHECK(flatten_params(z) == zbefore);
}

TEST_CASE("val_loss of a uniform-logits model is ln(n_classes)") {
    MLPModel m(HyperConfig{1, 4, 0.1, 0}, 3, 10);
    zero_params(m);
    Dataset d = synth_blobs(30, 3, 10, 0.05, 8);
    CHECK(val_loss(m, d) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("val_loss vanishes for confident correct logits") {
    MLPModel m(HyperConfig{1, 4, 0.1, 0}, 2, 3);
    zero_params(m);
    // Bias the output layer hard toward class 0 and present only class-0 data.
    m.layers().back().bias.value.data[0] = 50.0;
    Dataset d;
    d.samples = Tensor::matrix(2, 2, {0.2, 0.4, 0.6, 0.8});
    d.labels = {0, 0};
    d.n_classes = 3;
    CHECK(val_loss(m, d) < 1e-8);
}

TEST_CASE("val_loss equals the mean of hand-computed per-sample losses") {
    const Tensor logits = Tensor::matrix(2, 3, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
    const std::vector<int> labels{1, 2};
    auto single = [&](int row, int label) {
        double mx = logits.data[row * 3];
        for (int c = 1; c < 3; ++c) mx = std::max(mx, logits.data[row * 3 + c]);
        double sum = 0;
        for (int c = 0; c < 3; ++c) sum += std::exp(logits.data[row * 3 + c] - mx);
        return mx + std::log(sum) - logits.data[row * 3 + label];
    };
    const double expected = 0.5 * (single(0, 1) + single(1, 2));
    CHECK(softmax_ce_mean(logits, labels) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("val_loss mean decomposes across a concatenation") {
    MLPModel m(HyperConfig{2, 8, 0.1, 77}, 4, 3);
    Dataset d1 = synth_blobs(21, 4, 3, 0.2, 1);
    Dataset d2 = synth_blobs(12, 4, 3, 0.2, 2);
    Dataset all;
    all.n_classes = 3;
    all.samples = Tensor::zeros({33, 4});
    std::copy(d1.samples.data.begin(), d1.samples.data.end(), all.samples.data.begin());
    std::copy(d2.samples.data.begin(), d2.samples.data.end(),
              all.samples.data.begin() + d1.samples.data.size());
    all.labels = d1.labels;
    all.labels.insert(all.labels.end(), d2.labels.begin(), d2.labels.end());

    const double lhs = val_loss(m, all) * 33;
    const double rhs = val_loss(m, d1) * 21 + val_loss(m, d2) * 12;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("val_loss rejects an empty dataset") {
    MLPModel m(HyperConfig{1, 4, 0.1, 0}, 2, 2);
    Dataset empty;
    empty.samples = Tensor::zeros({0, 2});
    empty.n_classes = 2;
    CHECK_THROWS_AS(val_loss(m, empty), ContractError);
}

TEST_CASE("a dead network reports zero activations") {
    MLPModel m(HyperConfig{3, 6, 0.1, 0}, 4, 2);
    zero_params(m);
    for (std::size_t l = 0; l + 1 < m.layers().size(); ++l)
        std::fill(m.layers()[l].bias.value.data.begin(), m.layers()[l].bias.value.data.end(),
                  -1.0);
    auto trace = m.forward_with_activations(Tensor::matrix(1, 4, {0.5, 0.5, 0.5, 0.5}));
    for (std::size_t c : trace.relu_counts) CHECK(c == 0);
}

TEST_CASE("an identity-like layer with positive input fires every unit") {
    MLPModel m(HyperConfig{1, 4, 0.1, 0}, 4, 2);
    zero_params(m);
    for (int i = 0; i < 4; ++i) m.layers()[0].weight.value.at(i, i) = 1.0;
    auto trace = m.forward_with_activations(Tensor::matrix(1, 4, {0.3, 0.7, 0.2, 0.9}));
    REQUIRE(trace.relu_counts.size() == 1);
    CHECK(trace.relu_counts[0] == 4);
}

TEST_CASE("activation counts equal a brute-force recount of the stored hiddens") {
    Rng rng(13);
    MLPModel m(HyperConfig{3, 8, 0.1, 31}, 5, 3);
    Tensor x = Tensor::zeros({7, 5});
    for (double& v : x.data) v = rng.uniform();
    auto trace = m.forward_with_activations(x);
    REQUIRE(trace.hidden.size() == trace.relu_counts.size());
    for (std::size_t l = 0; l < trace.hidden.size(); ++l) {
        std::size_t recount = 0;
        for (double v : trace.hidden[l].data)
            if (v > 0.0) ++recount;
        CHECK(recount == trace.relu_counts[l]);
    }
}

TEST_CASE("forward_with_activations logits equal plain forward logits exactly") {
    Rng rng(29);
    MLPModel m(HyperConfig{2, 8, 0.1, 5}, 6, 4);
    Tensor x = Tensor::zeros({9, 6});
    for (double& v : x.data) v = rng.uniform();
    CHECK(m.forward(x).data == m.forward_with_activations(x).logits.data);
}

TEST_CASE("tape forward agrees with plain forward") {
    Rng rng(41);
    MLPModel m(HyperConfig{2, 6, 0.1, 91}, 4, 3);
    Tensor x = Tensor::zeros({5, 4});
    for (double& v : x.data) v = rng.uniform();
    Tape tape;
    Value logits = m.forward_on_tape(tape, tape.input(x));
    CHECK(tape.value(logits).data == m.forward(x).data);
    Tape frozen;
    Value flog = m.forward_frozen(frozen, frozen.input(x));
    CHECK(frozen.value(flog).data == m.forward(x).data);
}

TEST_CASE("macs_per_sample uses the closed form") {
    MLPModel m(HyperConfig{1, 16, 0.1, 0}, 8, 3);
    CHECK(m.macs_per_sample() == 8 * 16 + 16 * 3);
}

TEST_CASE("model serialization round-trips bit-exactly") {
    const fs::path dir = temp_dir();
    Dataset d = synth_blobs(48, 4, 3, 0.1, 66);
    MLPModel m(HyperConfig{2, 8, 0.05, 1234}, 4, 3, 7);
    Rng rng(2);
    train_model(m, d, TrainOptions{3, 16}, rng);
    save_model(dir / "m.bin", m);

    auto loaded = load_model(dir / "m.bin");
    CHECK(loaded->config().seed == 1234);
    CHECK(loaded->config().n_layers == 2);
    Tensor x = d.samples;
    CHECK(loaded->forward(x).data == m.forward(x).data);

    save_model(dir / "m2.bin", *loaded);
    CHECK(io::read_file(dir / "m.bin") == io::read_file(dir / "m2.bin"));
}

TEST_CASE("model loader rejects a corrupted magic") {
    const fs::path dir = temp_dir();
    MLPModel m(HyperConfig{1, 4, 0.1, 0}, 2, 2);
    save_model(dir / "m.bin", m);
    std::string bytes = io::read_file(dir / "m.bin");
    bytes[1] = 'z';
    io::atomic_write(dir / "m.bin", bytes);
    CHECK_THROWS_WITH_AS(load_model(dir / "m.bin"), doctest::Contains("magic"), ParseError);
}
