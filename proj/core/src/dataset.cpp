#include "v2xfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <fmt/format.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kIdxClasses = 10;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw LengthError(fmt::format("{}: truncated header", path.string()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledDataset::LabeledDataset(std::shared_ptr<const SampleStore> store,
                               std::vector<SampleId> rows)
    : store_(std::move(store)), rows_(std::move(rows)) {
  class_index_.resize(store_->num_classes);
  for (std::size_t pos = 0; pos < rows_.size(); ++pos) {
    class_index_[store_->labels[rows_[pos]]].push_back(static_cast<std::uint32_t>(pos));
  }
}

LabeledDataset LabeledDataset::from_arrays(std::size_t dim, std::size_t num_classes,
                                           std::vector<double> features,
                                           std::vector<Label> labels) {
  if (num_classes == 0) throw ArgumentError("dataset needs at least one class");
  if (features.size() != labels.size() * dim) {
    throw ArgumentError(fmt::format("feature buffer holds {} values, expected {}x{}",
                                    features.size(), labels.size(), dim));
  }
  for (Label l : labels) {
    if (l >= num_classes) {
      throw ArgumentError(fmt::format("label {} out of range for {} classes", l, num_classes));
    }
  }
  auto store = std::make_shared<SampleStore>();
  store->dim = dim;
  store->num_classes = num_classes;
  store->features = std::move(features);
  store->labels = std::move(labels);
  std::vector<SampleId> rows(store->rows());
  std::iota(rows.begin(), rows.end(), SampleId{0});
  return LabeledDataset(std::move(store), std::move(rows));
}

LabeledDataset LabeledDataset::empty_like() const {
  if (!store_) return {};
  return LabeledDataset(store_, {});
}

LabeledDataset LabeledDataset::subset(std::span<const std::uint32_t> positions) const {
  if (!store_) {
    if (!positions.empty()) throw ArgumentError("subset of an empty dataset");
    return {};
  }
  std::vector<SampleId> rows;
  rows.reserve(positions.size());
  for (auto pos : positions) {
    if (pos >= rows_.size()) throw ArgumentError(fmt::format("position {} out of range", pos));
    rows.push_back(rows_[pos]);
  }
  return LabeledDataset(store_, std::move(rows));
}

LabeledDataset LabeledDataset::with_ids(std::vector<SampleId> ids) const {
  if (!store_) {
    if (!ids.empty()) throw ArgumentError("ids given for a dataset without a store");
    return {};
  }
  for (auto id : ids) {
    if (id >= store_->rows()) throw ArgumentError(fmt::format("sample id {} out of range", id));
  }
  return LabeledDataset(store_, std::move(ids));
}

LabeledDataset LabeledDataset::concat(std::span<const LabeledDataset> parts) {
  std::shared_ptr<const SampleStore> store;
  std::size_t total = 0;
  for (const auto& part : parts) {
    if (!part.store_) continue;
    if (store && store != part.store_) {
      throw ArgumentError("cannot concatenate datasets backed by different stores");
    }
    store = part.store_;
    total += part.size();
  }
  if (!store) return {};
  std::vector<SampleId> rows;
  rows.reserve(total);
  for (const auto& part : parts) rows.insert(rows.end(), part.rows_.begin(), part.rows_.end());
  return LabeledDataset(std::move(store), std::move(rows));
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(class_index_.size());
  for (std::size_t c = 0; c < class_index_.size(); ++c) counts[c] = class_index_[c].size();
  return counts;
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (read_be32(images, 0, images_path) != kIdxImagesMagic) {
    throw FormatError(fmt::format("{}: bad magic number for an IDX image file", images_path.string()));
  }
  if (read_be32(labels, 0, labels_path) != kIdxLabelsMagic) {
    throw FormatError(fmt::format("{}: bad magic number for an IDX label file", labels_path.string()));
  }
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw ConsistencyError(fmt::format("{} holds {} images but {} holds {} labels", images_path.string(),
                                       count, labels_path.string(), label_count));
  }

  constexpr std::size_t kImageHeader = 16;
  constexpr std::size_t kLabelHeader = 8;
  const std::size_t dim = rows * cols;
  if (images.size() < kImageHeader + count * dim) {
    throw LengthError(fmt::format("{}: expected {} pixel bytes, found {}", images_path.string(),
                                  count * dim, images.size() - kImageHeader));
  }
  if (labels.size() < kLabelHeader + count) {
    throw LengthError(fmt::format("{}: expected {} label bytes, found {}", labels_path.string(), count,
                                  labels.size() - kLabelHeader));
  }

  std::vector<double> features(count * dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features[i] = static_cast<double>(images[kImageHeader + i]) / 255.0;
  }
  std::vector<Label> out_labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto l = labels[kLabelHeader + i];
    if (l >= kIdxClasses) {
      throw FormatError(fmt::format("{}: label {} at record {} is not a digit", labels_path.string(),
                                    static_cast<int>(l), i));
    }
    out_labels[i] = l;
  }
  return LabeledDataset::from_arrays(dim, kIdxClasses, std::move(features),
                                     std::move(out_labels));
}

LabeledDataset balanced_subset(const LabeledDataset& data, std::size_t per_class, Rng& rng) {
  const auto& index = data.class_index();
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c].size() < per_class) {
      throw InsufficientDataError(c, index[c].size(), per_class);
    }
  }
  std::vector<std::uint32_t> chosen;
  chosen.reserve(per_class * index.size());
  for (const auto& positions : index) {
    auto draw = rng.sample(std::span<const std::uint32_t>(positions), per_class);
    chosen.insert(chosen.end(), draw.begin(), draw.end());
  }
  std::sort(chosen.begin(), chosen.end());
  return data.subset(chosen);
}

LabeledDataset synthesize(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                          double spread, Rng& rng) {
  if (num_classes < 2) throw ArgumentError("synthesize needs at least two classes");
  if (dim < 1) throw ArgumentError("synthesize needs dim >= 1");
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw ArgumentError("synthesize needs a positive spread");
  }

  // Centroids live in [0.15, 0.85]^dim and are kept apart by rejection.
  constexpr double kLo = 0.15;
  constexpr double kHi = 0.85;
  const double min_separation =
      0.25 * (kHi - kLo) * std::pow(static_cast<double>(num_classes), -1.0 / dim);
  std::vector<double> centroids(num_classes * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::span<double> centroid(centroids.data() + c * dim, dim);
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw ArgumentError("could not place distinct centroids");
      for (auto& v : centroid) v = rng.uniform(kLo, kHi);
      bool far_enough = true;
      for (std::size_t prev = 0; prev < c && far_enough; ++prev) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = centroid[k] - centroids[prev * dim + k];
          d2 += diff * diff;
        }
        far_enough = std::sqrt(d2) >= min_separation;
      }
      if (far_enough) break;
    }
  }

  std::vector<double> features;
  features.reserve(num_classes * per_class * dim);
  std::vector<Label> labels;
  labels.reserve(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        features.push_back(std::clamp(centroids[c * dim + k] + spread * rng.normal(), 0.0, 1.0));
      }
      labels.push_back(static_cast<Label>(c));
    }
  }
  return LabeledDataset::from_arrays(dim, num_classes, std::move(features), std::move(labels));
}

std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data,
                                                          std::size_t per_class_first, Rng& rng) {
  const auto& index = data.class_index();
  std::vector<std::uint32_t> first;
  std::vector<std::uint32_t> rest;
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c].size() < per_class_first) {
      throw InsufficientDataError(c, index[c].size(), per_class_first);
    }
    auto shuffled = index[c];
    rng.shuffle(std::span<std::uint32_t>(shuffled));
    first.insert(first.end(), shuffled.begin(), shuffled.begin() + per_class_first);
    rest.insert(rest.end(), shuffled.begin() + per_class_first, shuffled.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(rest.begin(), rest.end());
  return {data.subset(first), data.subset(rest)};
}

}  // namespace v2xfl
