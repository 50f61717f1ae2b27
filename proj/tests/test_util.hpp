#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/rng.hpp"

namespace v2xfl::testing {

/// Dataset with the given labels and uniform random features in [0, 1).
inline LabeledDataset random_dataset(std::size_t dim, std::size_t classes,
                                     const std::vector<Label>& labels, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> features(labels.size() * dim);
  for (auto& f : features) f = u(gen);
  return LabeledDataset::from_arrays(dim, classes, std::move(features), labels);
}

/// `per_class` samples of each class, emitted class by class.
inline LabeledDataset balanced_dataset(std::size_t dim, std::size_t classes, std::size_t per_class,
                                       std::uint64_t seed) {
  std::vector<Label> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.insert(labels.end(), per_class, static_cast<Label>(c));
  return random_dataset(dim, classes, labels, seed);
}

/// Independent label count: a plain scan over the samples.
inline std::vector<std::size_t> scan_counts(const LabeledDataset& d, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < d.size(); ++i) ++counts.at(d.sample(i).label);
  return counts;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("v2xfl_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

/// IDX image/label byte strings; images are rows x cols unsigned bytes.
inline std::string idx_images(std::uint32_t rows, std::uint32_t cols,
                              const std::vector<std::vector<std::uint8_t>>& pixels) {
  std::string out;
  put_be32(out, 0x00000803);
  put_be32(out, static_cast<std::uint32_t>(pixels.size()));
  put_be32(out, rows);
  put_be32(out, cols);
  for (const auto& img : pixels) {
    for (auto p : img) out.push_back(static_cast<char>(p));
  }
  return out;
}

inline std::string idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_be32(out, 0x00000801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) out.push_back(static_cast<char>(l));
  return out;
}

}  // namespace v2xfl::testing
