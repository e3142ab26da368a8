#include "hijacklab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/rng.hpp"

namespace hijacklab {

namespace {

using ordered_json = nlohmann::ordered_json;

void expect_known_keys(const ordered_json& j, const std::set<std::string>& known,
                       const std::string& where, std::vector<std::string>& errors) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) errors.push_back(where + key + ": unknown field");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
    std::vector<std::string> errors;
    expect_known_keys(j,
                      {"dataset", "split", "space", "training", "groupings", "metrics",
                       "knowledge", "rates", "hvae", "seeds", "latency_repeats",
                       "energy_cost_per_mac", "output_dir"},
                      "", errors);

    ExperimentConfig cfg;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            expect_known_keys(d, {"kind", "n", "dim", "classes", "spread", "seed", "images",
                                  "labels"},
                              "dataset.", errors);
            cfg.dataset.kind = d.value("kind", cfg.dataset.kind);
            cfg.dataset.n = d.value("n", cfg.dataset.n);
            cfg.dataset.dim = d.value("dim", cfg.dataset.dim);
            cfg.dataset.classes = d.value("classes", cfg.dataset.classes);
            cfg.dataset.spread = d.value("spread", cfg.dataset.spread);
            cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
            cfg.dataset.images = d.value("images", cfg.dataset.images);
            cfg.dataset.labels = d.value("labels", cfg.dataset.labels);
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            expect_known_keys(s, {"train_frac", "val_frac", "test_frac", "seed", "stratified"},
                              "split.", errors);
            cfg.split.train_frac = s.value("train_frac", cfg.split.train_frac);
            cfg.split.val_frac = s.value("val_frac", cfg.split.val_frac);
            cfg.split.test_frac = s.value("test_frac", cfg.split.test_frac);
            cfg.split.seed = s.value("seed", cfg.split.seed);
            cfg.split.stratified = s.value("stratified", cfg.split.stratified);
        }
        if (j.contains("space")) {
            const auto& s = j.at("space");
            expect_known_keys(s, {"layers", "neurons", "learning_rates"}, "space.", errors);
            if (s.contains("layers")) cfg.space.layers = s.at("layers").get<std::vector<int>>();
            if (s.contains("neurons"))
                cfg.space.neurons = s.at("neurons").get<std::vector<int>>();
            if (s.contains("learning_rates"))
                cfg.space.learning_rates = s.at("learning_rates").get<std::vector<double>>();
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            expect_known_keys(t, {"epochs", "batch_size"}, "training.", errors);
            cfg.training.epochs = t.value("epochs", cfg.training.epochs);
            cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
        }
        if (j.contains("groupings")) {
            cfg.groupings.clear();
            for (const auto& g : j.at("groupings"))
                cfg.groupings.push_back(grouping_from_name(g.get<std::string>()));
        }
        if (j.contains("metrics")) {
            cfg.metrics.clear();
            for (const auto& m : j.at("metrics"))
                cfg.metrics.push_back(metric_kind_from_name(m.get<std::string>()));
        }
        if (j.contains("knowledge")) {
            cfg.knowledge.clear();
            for (const auto& k : j.at("knowledge"))
                cfg.knowledge.push_back(knowledge_from_name(k.get<std::string>()));
        }
        if (j.contains("rates")) cfg.rates = j.at("rates").get<std::vector<double>>();
        if (j.contains("hvae")) {
            const auto& h = j.at("hvae");
            expect_known_keys(
                h, {"latent_dim", "hidden", "recon", "learning_rate", "epochs", "batch_size"},
                "hvae.", errors);
            cfg.hvae.latent_dim = h.value("latent_dim", cfg.hvae.latent_dim);
            if (h.contains("hidden")) cfg.hvae.hidden = h.at("hidden").get<std::vector<int>>();
            if (h.contains("recon"))
                cfg.hvae.recon = recon_kind_from_name(h.at("recon").get<std::string>());
            cfg.hvae.learning_rate = h.value("learning_rate", cfg.hvae.learning_rate);
            cfg.hvae.epochs = h.value("epochs", cfg.hvae.epochs);
            cfg.hvae.batch_size = h.value("batch_size", cfg.hvae.batch_size);
        }
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            expect_known_keys(s, {"victims", "surrogates", "hvae", "substitution"}, "seeds.",
                              errors);
            cfg.seeds.victims = s.value("victims", cfg.seeds.victims);
            cfg.seeds.surrogates = s.value("surrogates", cfg.seeds.surrogates);
            cfg.seeds.hvae = s.value("hvae", cfg.seeds.hvae);
            cfg.seeds.substitution = s.value("substitution", cfg.seeds.substitution);
        }
        cfg.latency_repeats = j.value("latency_repeats", cfg.latency_repeats);
        cfg.energy_cost_per_mac = j.value("energy_cost_per_mac", cfg.energy_cost_per_mac);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    } catch (const ContractError& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!errors.empty()) {
        std::ostringstream os;
        os << "invalid config:";
        for (const auto& line : errors) os << "\n  " << line;
        throw ConfigError(os.str());
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

nlohmann::ordered_json ExperimentConfig::to_json(bool include_output_dir) const {
    ordered_json j;
    j["dataset"] = {{"kind", dataset.kind},     {"n", dataset.n},
                    {"dim", dataset.dim},       {"classes", dataset.classes},
                    {"spread", dataset.spread}, {"seed", dataset.seed},
                    {"images", dataset.images}, {"labels", dataset.labels}};
    j["split"] = {{"train_frac", split.train_frac},
                  {"val_frac", split.val_frac},
                  {"test_frac", split.test_frac},
                  {"seed", split.seed},
                  {"stratified", split.stratified}};
    j["space"] = {{"layers", space.layers},
                  {"neurons", space.neurons},
                  {"learning_rates", space.learning_rates}};
    j["training"] = {{"epochs", training.epochs}, {"batch_size", training.batch_size}};
    std::vector<std::string> names;
    for (Grouping g : groupings) names.push_back(grouping_name(g));
    j["groupings"] = names;
    names.clear();
    for (HijackMetricKind m : metrics) names.push_back(metric_kind_name(m));
    j["metrics"] = names;
    names.clear();
    for (Knowledge k : knowledge) names.push_back(knowledge_name(k));
    j["knowledge"] = names;
    j["rates"] = rates;
    j["hvae"] = {{"latent_dim", hvae.latent_dim}, {"hidden", hvae.hidden},
                 {"recon", recon_kind_name(hvae.recon)},
                 {"learning_rate", hvae.learning_rate},
                 {"epochs", hvae.epochs},
                 {"batch_size", hvae.batch_size}};
    j["seeds"] = {{"victims", seeds.victims},
                  {"surrogates", seeds.surrogates},
                  {"hvae", seeds.hvae},
                  {"substitution", seeds.substitution}};
    j["latency_repeats"] = latency_repeats;
    j["energy_cost_per_mac"] = energy_cost_per_mac;
    if (include_output_dir) j["output_dir"] = output_dir;
    return j;
}

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    auto require = [&](bool ok, const std::string& message) {
        if (!ok) errors.push_back(message);
    };

    require(dataset.kind == "synth_blobs" || dataset.kind == "idx",
            "dataset.kind: must be 'synth_blobs' or 'idx'");
    if (dataset.kind == "synth_blobs") {
        require(dataset.classes >= 2, "dataset.classes: must be >= 2");
        require(dataset.dim >= 1, "dataset.dim: must be >= 1");
        require(dataset.n >= static_cast<std::uint64_t>(std::max(dataset.classes, 10)),
                "dataset.n: too small to split");
        require(dataset.spread > 0, "dataset.spread: must be > 0");
    } else {
        require(!dataset.images.empty(), "dataset.images: required for kind 'idx'");
        require(!dataset.labels.empty(), "dataset.labels: required for kind 'idx'");
    }
    require(split.train_frac > 0 && split.val_frac > 0 && split.test_frac > 0,
            "split: fractions must be positive");
    require(std::abs(split.train_frac + split.val_frac + split.test_frac - 1.0) <= 1e-9,
            "split: fractions must sum to 1");
    require(!space.layers.empty(), "space.layers: must be non-empty");
    require(!space.neurons.empty(), "space.neurons: must be non-empty");
    require(!space.learning_rates.empty(), "space.learning_rates: must be non-empty");
    for (int l : space.layers) require(l >= 1, "space.layers: entries must be >= 1");
    for (int w : space.neurons) require(w >= 1, "space.neurons: entries must be >= 1");
    for (double lr : space.learning_rates)
        require(lr >= 0, "space.learning_rates: entries must be >= 0");
    require(training.epochs >= 0, "training.epochs: must be >= 0");
    require(training.batch_size >= 1, "training.batch_size: must be >= 1");
    require(!groupings.empty(), "groupings: must be non-empty");
    require(!metrics.empty(), "metrics: must be non-empty");
    require(!knowledge.empty(), "knowledge: must be non-empty");
    require(!rates.empty(), "rates: must be non-empty");
    for (double r : rates) require(r >= 0.0 && r <= 1.0, "rates: entries must be in [0, 1]");
    require(hvae.latent_dim >= 1, "hvae.latent_dim: must be >= 1");
    require(!hvae.hidden.empty(), "hvae.hidden: must be non-empty");
    for (int h : hvae.hidden) require(h >= 1, "hvae.hidden: entries must be >= 1");
    require(hvae.learning_rate > 0, "hvae.learning_rate: must be > 0");
    require(hvae.epochs >= 0, "hvae.epochs: must be >= 0");
    require(hvae.batch_size >= 1, "hvae.batch_size: must be >= 1");
    require(latency_repeats >= 1, "latency_repeats: must be >= 1");
    require(energy_cost_per_mac > 0, "energy_cost_per_mac: must be > 0");
    require(!output_dir.empty(), "output_dir: must be non-empty");

    if (!errors.empty()) {
        std::ostringstream os;
        os << "invalid config:";
        for (const auto& line : errors) os << "\n  " << line;
        throw ConfigError(os.str());
    }
}

std::uint64_t ExperimentConfig::hash() const {
    return fnv1a64(to_json(false).dump());
}

void ExperimentConfig::override_seeds(std::uint64_t master) {
    dataset.seed = mix_seed(master, 1);
    split.seed = mix_seed(master, 2);
    seeds.victims = mix_seed(master, 3);
    seeds.surrogates = mix_seed(master, 4);
    seeds.hvae = mix_seed(master, 5);
    seeds.substitution = mix_seed(master, 6);
}

}  // namespace hijacklab
