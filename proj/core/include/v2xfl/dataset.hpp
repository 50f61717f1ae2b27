#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "v2xfl/rng.hpp"

namespace v2xfl {

using Label = std::uint16_t;
/// Stable identity of a sample: its row in the backing store.
using SampleId = std::uint32_t;

/// Read-only view of one record.
struct Sample {
  std::span<const double> features;
  Label label = 0;
  SampleId id = 0;
};

/// Backing storage shared by every view derived from one loaded or generated
/// dataset. Row-major features, values in [0, 1].
struct SampleStore {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<Label> labels;

  std::size_t rows() const noexcept { return labels.size(); }
};

/// Ordered collection of labeled samples plus a per-class position index.
///
/// A dataset is an immutable view (list of rows) over a shared SampleStore,
/// so partitions, exchange packets and training mixtures are cheap to copy
/// and samples keep their identity across all of them.
class LabeledDataset {
 public:
  LabeledDataset() = default;

  /// Takes ownership of row-major features; every row becomes one sample.
  static LabeledDataset from_arrays(std::size_t dim, std::size_t num_classes,
                                    std::vector<double> features, std::vector<Label> labels);

  /// Empty view sharing this dataset's store.
  LabeledDataset empty_like() const;
  /// View over positions of this dataset (not store rows), in the given order.
  LabeledDataset subset(std::span<const std::uint32_t> positions) const;
  /// View over store rows; every id must exist in the store.
  LabeledDataset with_ids(std::vector<SampleId> ids) const;
  /// Concatenation of views over one store. Empty default-constructed
  /// datasets are skipped.
  static LabeledDataset concat(std::span<const LabeledDataset> parts);

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t dim() const noexcept { return store_ ? store_->dim : 0; }
  std::size_t num_classes() const noexcept { return store_ ? store_->num_classes : 0; }

  std::span<const double> features(std::size_t position) const noexcept {
    return {store_->features.data() + static_cast<std::size_t>(rows_[position]) * store_->dim,
            store_->dim};
  }
  Label label(std::size_t position) const noexcept { return store_->labels[rows_[position]]; }
  SampleId id(std::size_t position) const noexcept { return rows_[position]; }
  Sample sample(std::size_t position) const noexcept {
    return {features(position), label(position), id(position)};
  }

  std::span<const SampleId> ids() const noexcept { return rows_; }
  /// For each class, the positions holding that label (ascending).
  const std::vector<std::vector<std::uint32_t>>& class_index() const noexcept {
    return class_index_;
  }
  std::vector<std::size_t> class_counts() const;

  bool shares_store_with(const LabeledDataset& other) const noexcept {
    return store_ == other.store_;
  }
  const std::shared_ptr<const SampleStore>& store() const noexcept { return store_; }

 private:
  LabeledDataset(std::shared_ptr<const SampleStore> store, std::vector<SampleId> rows);

  std::shared_ptr<const SampleStore> store_;
  std::vector<SampleId> rows_;
  std::vector<std::vector<std::uint32_t>> class_index_;
};

/// Reads an IDX image/label file pair (MNIST distribution format). Pixels
/// are scaled by 1/255; the class count is fixed at 10.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

/// Exactly `per_class` samples of every class, drawn without replacement.
/// Output keeps the source order.
LabeledDataset balanced_subset(const LabeledDataset& data, std::size_t per_class, Rng& rng);

/// Isotropic Gaussian blobs around `num_classes` fixed centroids, clamped to
/// [0, 1]. Samples are emitted class by class.
LabeledDataset synthesize(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                          double spread, Rng& rng);

/// Splits a class-balanced dataset into (first `per_class_first` of each
/// class, the rest), drawing the first part at random.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data,
                                                          std::size_t per_class_first, Rng& rng);

}  // namespace v2xfl
