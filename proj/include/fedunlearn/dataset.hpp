#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedunlearn {

class DatasetError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct TriggerSpec;

/// Row-major feature matrix with one class label per row.
class LabeledDataset {
 public:
    LabeledDataset() = default;
    LabeledDataset(std::size_t dim, std::size_t num_classes, std::vector<double> features,
                   std::vector<int> labels);

    std::size_t size() const { return labels_.size(); }
    std::size_t dim() const { return dim_; }
    std::size_t num_classes() const { return num_classes_; }

    std::span<const double> row(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }
    int label(std::size_t i) const { return labels_[i]; }

    const std::vector<double>& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }

    LabeledDataset subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
    friend LabeledDataset inject_trigger(const LabeledDataset&, const TriggerSpec&, std::uint64_t);
    std::size_t dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<double> features_;
    std::vector<int> labels_;
};

/// Per-client partition of a source dataset.
struct ClientShards {
    std::vector<LabeledDataset> shards;
    /// Source row indices held by each shard, in shard order.
    std::vector<std::vector<std::size_t>> source_rows;

    std::size_t num_clients() const { return shards.size(); }
    /// alpha_i = |D_i| / sum_{j in active} |D_j| for each active client, in order.
    std::vector<double> weights(std::span<const std::size_t> active) const;
};

struct TriggerSpec {
    std::vector<std::size_t> coordinates;
    double value = 3.0;
    int target_label = 0;
    double poison_fraction = 0.3;
};

/// Default trigger for synthetic data: the last three feature coordinates set to 3.0.
TriggerSpec default_trigger(std::size_t dim);

/// Gaussian blobs; one mean per class drawn from `seed`, `samples_per_class` rows each.
LabeledDataset generate_synthetic(std::size_t classes, std::size_t dim,
                                  std::size_t samples_per_class, double spread, std::uint64_t seed);

struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Synthetic task whose train and test rows share the same class means.
TrainTestSplit make_synthetic_task(std::size_t classes, std::size_t dim, std::size_t train_per_class,
                                   std::size_t test_per_class, double spread, std::uint64_t seed);

/// Big-endian IDX images (magic 0x00000803) and labels (0x00000801), pixels scaled to [0,1].
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        std::optional<std::size_t> num_classes = std::nullopt);

/// Label-skew partition: client groups per class, degree `q` in [1/C, 1].
ClientShards partition_noniid(const LabeledDataset& data, std::size_t n_clients, double degree_q,
                              std::uint64_t seed);

/// Sets trigger coordinates and relabels a floor(fraction * n) seeded subset of rows.
LabeledDataset inject_trigger(const LabeledDataset& data, const TriggerSpec& spec,
                              std::uint64_t seed);

/// Test rows whose label differs from the target, all carrying the trigger.
LabeledDataset make_asr_set(const LabeledDataset& test, const TriggerSpec& spec);

}  // namespace fedunlearn
