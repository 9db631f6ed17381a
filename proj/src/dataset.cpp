#include "fedunlearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "fedunlearn/rng.hpp"

namespace fedunlearn {

LabeledDataset::LabeledDataset(std::size_t dim, std::size_t num_classes,
                               std::vector<double> features, std::vector<int> labels)
    : dim_(dim), num_classes_(num_classes), features_(std::move(features)),
      labels_(std::move(labels)) {
    if (dim_ == 0) throw DatasetError("dataset: feature dimension must be positive");
    if (features_.size() != labels_.size() * dim_) {
        throw DatasetError("dataset: feature matrix does not match label count");
    }
    for (int l : labels_) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes_) {
            throw DatasetError("dataset: label " + std::to_string(l) + " outside [0, " +
                               std::to_string(num_classes_) + ")");
        }
    }
    for (double x : features_) {
        if (!std::isfinite(x)) throw DatasetError("dataset: non-finite feature value");
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    std::vector<double> f;
    std::vector<int> l;
    f.reserve(indices.size() * dim_);
    l.reserve(indices.size());
    for (std::size_t idx : indices) {
        auto r = row(idx);
        f.insert(f.end(), r.begin(), r.end());
        l.push_back(labels_[idx]);
    }
    LabeledDataset out;
    out.dim_ = dim_;
    out.num_classes_ = num_classes_;
    out.features_ = std::move(f);
    out.labels_ = std::move(l);
    return out;
}

std::vector<double> ClientShards::weights(std::span<const std::size_t> active) const {
    std::size_t total = 0;
    for (std::size_t id : active) total += shards.at(id).size();
    std::vector<double> w;
    w.reserve(active.size());
    for (std::size_t id : active) {
        w.push_back(total == 0 ? 1.0 / static_cast<double>(active.size())
                               : static_cast<double>(shards[id].size()) / static_cast<double>(total));
    }
    return w;
}

TriggerSpec default_trigger(std::size_t dim) {
    TriggerSpec spec;
    for (std::size_t j = dim >= 3 ? dim - 3 : 0; j < dim; ++j) spec.coordinates.push_back(j);
    return spec;
}

LabeledDataset generate_synthetic(std::size_t classes, std::size_t dim,
                                  std::size_t samples_per_class, double spread,
                                  std::uint64_t seed) {
    if (classes < 2) throw DatasetError("generate_synthetic: need at least 2 classes");
    if (dim == 0 || samples_per_class == 0) {
        throw DatasetError("generate_synthetic: dimension and samples per class must be positive");
    }
    if (!(spread >= 0.0)) throw DatasetError("generate_synthetic: spread must be nonnegative");

    Rng mean_rng(derive_seed(seed, {0x6d65616e}));
    std::vector<double> means(classes * dim);
    for (double& m : means) m = mean_rng.normal();

    Rng noise_rng(derive_seed(seed, {0x6e6f6973}));
    std::vector<double> features;
    std::vector<int> labels;
    features.reserve(classes * samples_per_class * dim);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < samples_per_class; ++k) {
            for (std::size_t j = 0; j < dim; ++j) {
                features.push_back(means[c * dim + j] + spread * noise_rng.normal());
            }
            labels.push_back(static_cast<int>(c));
        }
    }
    return LabeledDataset(dim, classes, std::move(features), std::move(labels));
}

TrainTestSplit make_synthetic_task(std::size_t classes, std::size_t dim, std::size_t train_per_class,
                                   std::size_t test_per_class, double spread, std::uint64_t seed) {
    const std::size_t per = train_per_class + test_per_class;
    auto all = generate_synthetic(classes, dim, per, spread, seed);
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < per; ++k) {
            (k < train_per_class ? train_rows : test_rows).push_back(c * per + k);
        }
    }
    return {all.subset(train_rows), all.subset(test_rows)};
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DatasetError(what + ": truncated header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t bytes, const std::string& what) {
    std::vector<unsigned char> buf(bytes);
    if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes))) {
        throw DatasetError(what + ": truncated payload");
    }
    return buf;
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        std::optional<std::size_t> num_classes) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DatasetError("load_idx: cannot open " + images_path.string());
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DatasetError("load_idx: cannot open " + labels_path.string());

    const std::string img_name = images_path.string();
    const std::string lab_name = labels_path.string();
    if (read_be32(img, img_name) != 0x00000803) throw DatasetError(img_name + ": bad magic");
    if (read_be32(lab, lab_name) != 0x00000801) throw DatasetError(lab_name + ": bad magic");

    const std::size_t n_images = read_be32(img, img_name);
    const std::size_t rows = read_be32(img, img_name);
    const std::size_t cols = read_be32(img, img_name);
    const std::size_t n_labels = read_be32(lab, lab_name);
    if (n_images != n_labels) {
        throw DatasetError("load_idx: count mismatch (" + std::to_string(n_images) + " images, " +
                           std::to_string(n_labels) + " labels)");
    }

    const auto pixels = read_payload(img, n_images * rows * cols, img_name);
    const auto raw_labels = read_payload(lab, n_labels, lab_name);

    std::vector<double> features(pixels.size());
    std::transform(pixels.begin(), pixels.end(), features.begin(),
                   [](unsigned char p) { return static_cast<double>(p) / 255.0; });
    std::vector<int> labels(raw_labels.begin(), raw_labels.end());
    const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    const std::size_t classes = num_classes.value_or(static_cast<std::size_t>(max_label) + 1);
    return LabeledDataset(rows * cols, classes, std::move(features), std::move(labels));
}

ClientShards partition_noniid(const LabeledDataset& data, std::size_t n_clients, double degree_q,
                              std::uint64_t seed) {
    const std::size_t classes = data.num_classes();
    if (n_clients == 0) throw DatasetError("partition_noniid: need at least one client");
    const double lo = 1.0 / static_cast<double>(classes);
    if (!(degree_q >= lo - 1e-12 && degree_q <= 1.0)) {
        throw DatasetError("partition_noniid: degree " + std::to_string(degree_q) + " outside [1/C, 1]");
    }

    // group g -> its clients; contiguous blocks, remainder padded onto the last group
    std::vector<std::vector<std::size_t>> groups(classes);
    if (n_clients >= classes) {
        const std::size_t per = n_clients / classes;
        for (std::size_t i = 0; i < n_clients; ++i) groups[std::min(i / per, classes - 1)].push_back(i);
    } else {
        for (std::size_t g = 0; g < classes; ++g) groups[g].push_back(g % n_clients);
    }

    Rng rng(derive_seed(seed, {0x70617274}));
    std::vector<std::vector<std::size_t>> rows(n_clients);
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto label = static_cast<std::size_t>(data.label(s));
        std::size_t group = label;
        if (rng.uniform() >= degree_q && classes > 1) {
            const auto other = rng.below(classes - 1);
            group = other < label ? other : other + 1;
        }
        const auto& members = groups[group];
        rows[members[rng.below(members.size())]].push_back(s);
    }

    ClientShards out;
    out.shards.reserve(n_clients);
    for (auto& r : rows) out.shards.push_back(data.subset(r));
    out.source_rows = std::move(rows);
    return out;
}

LabeledDataset inject_trigger(const LabeledDataset& data, const TriggerSpec& spec,
                              std::uint64_t seed) {
    for (std::size_t c : spec.coordinates) {
        if (c >= data.dim()) throw DatasetError("inject_trigger: coordinate outside feature range");
    }
    if (spec.target_label < 0 || static_cast<std::size_t>(spec.target_label) >= data.num_classes()) {
        throw DatasetError("inject_trigger: target label outside class range");
    }
    if (!(spec.poison_fraction > 0.0 && spec.poison_fraction <= 1.0)) {
        throw DatasetError("inject_trigger: poison fraction must lie in (0, 1]");
    }

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {0x74726967}));
    rng.shuffle(order);
    const auto count = static_cast<std::size_t>(
        std::floor(spec.poison_fraction * static_cast<double>(data.size()) + 1e-9));

    LabeledDataset out = data;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t r = order[k];
        for (std::size_t c : spec.coordinates) out.features_[r * out.dim_ + c] = spec.value;
        out.labels_[r] = spec.target_label;
    }
    return out;
}

LabeledDataset make_asr_set(const LabeledDataset& test, const TriggerSpec& spec) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.label(i) != spec.target_label) keep.push_back(i);
    }
    TriggerSpec full = spec;
    full.poison_fraction = 1.0;
    return inject_trigger(test.subset(keep), full, 0);
}

}  // namespace fedunlearn
