#include "hijacklab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/rng.hpp"

namespace hijacklab {

namespace io {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

CsvFile read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvFile csv;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            csv.comments.push_back(line);
            continue;
        }
        if (!have_header) {
            csv.header = split_csv_line(line);
            have_header = true;
        } else {
            csv.rows.push_back(split_csv_line(line));
        }
    }
    if (!have_header) throw ParseError("no header row in " + path.string());
    return csv;
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace io

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    const std::size_t d = dim();
    Dataset out;
    out.n_classes = n_classes;
    out.samples = Tensor::zeros({indices.size(), d});
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t src = indices[r];
        std::copy_n(&samples.data[src * d], d, &out.samples.data[r * d]);
        out.labels.push_back(labels[src]);
    }
    return out;
}

Tensor Dataset::row(std::size_t i) const {
    const std::size_t d = dim();
    Tensor out = Tensor::zeros({1, d});
    std::copy_n(&samples.data[i * d], d, out.data.data());
    return out;
}

void Dataset::validate() const {
    if (samples.rank() != 2)
        throw ContractError("Dataset: samples must be [n x d], got " + samples.shape_str());
    if (samples.shape[0] != labels.size())
        throw ContractError("Dataset: " + std::to_string(samples.shape[0]) + " samples vs " +
                            std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y < 0 || y >= n_classes)
            throw ContractError("Dataset: label " + std::to_string(y) + " outside [0, " +
                                std::to_string(n_classes) + ")");
}

namespace {
std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}
}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    std::ifstream img(images, std::ios::binary);
    if (!img) throw IoError("cannot open " + images.string());
    std::ifstream lab(labels, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels.string());

    const std::uint32_t img_magic = io::read_u32_be(img, "IDX image magic");
    if (img_magic != 0x00000803)
        throw ParseError("bad IDX image magic: expected 0x803, got 0x" + hex32(img_magic));
    const std::uint32_t n = io::read_u32_be(img, "IDX image count");
    const std::uint32_t rows = io::read_u32_be(img, "IDX image rows");
    const std::uint32_t cols = io::read_u32_be(img, "IDX image cols");

    const std::uint32_t lab_magic = io::read_u32_be(lab, "IDX label magic");
    if (lab_magic != 0x00000801)
        throw ParseError("bad IDX label magic: expected 0x801, got 0x" + hex32(lab_magic));
    const std::uint32_t n_labels = io::read_u32_be(lab, "IDX label count");
    if (n != n_labels)
        throw ParseError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                         std::to_string(n_labels) + " labels");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixel_buf(d);
    Dataset out;
    out.samples = Tensor::zeros({n, d});
    out.labels.reserve(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_buf.data()),
                      static_cast<std::streamsize>(d)))
            throw ParseError("truncated IDX image file at image " + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j)
            out.samples.data[i * d + j] = static_cast<double>(pixel_buf[j]) / 255.0;
        char y;
        if (!lab.read(&y, 1))
            throw ParseError("truncated IDX label file at label " + std::to_string(i));
        const int label = static_cast<unsigned char>(y);
        out.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    out.n_classes = max_label + 1;
    return out;
}

Dataset synth_blobs(std::size_t n, std::size_t d, int k, double spread, std::uint64_t seed) {
    if (k < 1 || d < 1) throw ContractError("synth_blobs: need k >= 1 and d >= 1");
    if (n < static_cast<std::size_t>(k))
        throw ContractError("synth_blobs: need at least one sample per class");

    Rng center_rng(mix_seed(seed, 0x63656e74));  // "cent"
    Tensor centers = Tensor::zeros({static_cast<std::size_t>(k), d});
    for (double& v : centers.data) v = 0.1 + 0.8 * center_rng.uniform();

    Rng noise_rng(mix_seed(seed, 0x6e6f6973));  // "nois"
    Dataset out;
    out.n_classes = k;
    out.samples = Tensor::zeros({n, d});
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % static_cast<std::size_t>(k));
        out.labels.push_back(y);
        for (std::size_t j = 0; j < d; ++j) {
            const double v = centers.data[static_cast<std::size_t>(y) * d + j] +
                             spread * noise_rng.normal();
            out.samples.data[i * d + j] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

Splits split(const Dataset& data, const SplitSpec& spec) {
    if (spec.train_frac <= 0 || spec.val_frac <= 0 || spec.test_frac <= 0)
        throw ContractError("split: fractions must be positive");
    if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
        throw ContractError("split: fractions must sum to 1");
    data.validate();

    const std::size_t n = data.size();
    Rng rng(spec.seed);

    std::vector<std::size_t> train_idx, val_idx, test_idx;
    if (spec.stratified) {
        // Per-class shuffle and floor allocation, remainder to train.
        for (int c = 0; c < data.n_classes; ++c) {
            std::vector<std::size_t> cls;
            for (std::size_t i = 0; i < n; ++i)
                if (data.labels[i] == c) cls.push_back(i);
            rng.shuffle(cls);
            const std::size_t nv = static_cast<std::size_t>(spec.val_frac * cls.size());
            const std::size_t nt = static_cast<std::size_t>(spec.test_frac * cls.size());
            const std::size_t ntr = cls.size() - nv - nt;
            for (std::size_t i = 0; i < cls.size(); ++i) {
                if (i < ntr) train_idx.push_back(cls[i]);
                else if (i < ntr + nv) val_idx.push_back(cls[i]);
                else test_idx.push_back(cls[i]);
            }
        }
    } else {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t nv = static_cast<std::size_t>(spec.val_frac * n);
        const std::size_t nt = static_cast<std::size_t>(spec.test_frac * n);
        const std::size_t ntr = n - nv - nt;
        train_idx.assign(order.begin(), order.begin() + ntr);
        val_idx.assign(order.begin() + ntr, order.begin() + ntr + nv);
        test_idx.assign(order.begin() + ntr + nv, order.end());
    }
    if (train_idx.empty() || val_idx.empty() || test_idx.empty())
        throw ContractError("split: a split came out empty; dataset too small for fractions");
    return Splits{data.subset(train_idx), data.subset(val_idx), data.subset(test_idx)};
}

void save_dataset(const std::filesystem::path& path, const Dataset& data, std::uint64_t seed,
                  std::uint64_t config_hash) {
    data.validate();
    std::ostringstream os(std::ios::binary);
    io::write_magic(os, "MSHD");
    io::write_u32(os, 1);  // version
    io::write_u64(os, data.size());
    io::write_u32(os, static_cast<std::uint32_t>(data.dim()));
    io::write_u32(os, static_cast<std::uint32_t>(data.n_classes));
    io::write_u64(os, seed);
    io::write_u64(os, config_hash);
    for (double v : data.samples.data) io::write_f64(os, v);
    for (int y : data.labels) io::write_u16(os, static_cast<std::uint16_t>(y));
    io::atomic_write(path, os.str());
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    io::expect_magic(is, "MSHD", "dataset");
    const std::uint32_t version = io::read_u32(is, "dataset version");
    if (version != 1)
        throw ParseError("unsupported dataset version " + std::to_string(version));
    LoadedDataset out;
    const std::uint64_t n = io::read_u64(is, "dataset size");
    const std::uint32_t d = io::read_u32(is, "dataset dim");
    const std::uint32_t k = io::read_u32(is, "dataset classes");
    out.seed = io::read_u64(is, "dataset seed");
    out.config_hash = io::read_u64(is, "dataset config hash");
    out.data.n_classes = static_cast<int>(k);
    out.data.samples = Tensor::zeros({n, d});
    for (double& v : out.data.samples.data) v = io::read_f64(is, "dataset sample");
    out.data.labels.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        out.data.labels.push_back(io::read_u16(is, "dataset label"));
    out.data.validate();
    return out;
}

}  // namespace hijacklab
