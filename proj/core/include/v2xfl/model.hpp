#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/rng.hpp"

namespace v2xfl {

enum class Architecture {
  logistic,  ///< multinomial logistic regression
  mlp,       ///< one hidden layer with ReLU
};

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

struct ModelSpec {
  Architecture architecture = Architecture::logistic;
  std::size_t hidden_width = 32;  ///< mlp only
  std::uint64_t init_seed = 0;
};

/// Layer layout of a parameter vector.
///
/// logistic: W[n_c x dim] row-major, then b[n_c].
/// mlp:      W1[h x dim], b1[h], W2[n_c x h], b2[n_c].
struct ModelShape {
  Architecture architecture = Architecture::logistic;
  std::size_t input_dim = 0;
  std::size_t hidden_width = 0;  ///< zero for logistic
  std::size_t num_classes = 0;

  std::size_t parameter_count() const noexcept;
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct ModelParameters {
  ModelShape shape;
  std::vector<double> values;
};

struct OptimizerSettings {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
};

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<double> velocity;

  static OptimizerState fresh(const OptimizerSettings& settings, std::size_t parameter_count);
};

ModelShape make_shape(const ModelSpec& spec, std::size_t dim, std::size_t num_classes);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ModelParameters init_model(const ModelSpec& spec, std::size_t dim, std::size_t num_classes,
                           Rng& rng);
/// Same, seeded from spec.init_seed.
ModelParameters init_model(const ModelSpec& spec, std::size_t dim, std::size_t num_classes);

/// Softmax class probabilities.
std::vector<double> forward(const ModelParameters& model, std::span<const double> features);

/// Argmax of the logits, lowest class index on ties.
Label predict(const ModelParameters& model, std::span<const double> features);

struct LossGradient {
  double loss = 0.0;  ///< mean cross-entropy over the batch
  std::vector<double> gradient;
};

/// Mean softmax cross-entropy and its gradient over data[positions].
LossGradient loss_and_gradient(const ModelParameters& model, const LabeledDataset& data,
                               std::span<const std::uint32_t> positions);

struct EpochResult {
  ModelParameters model;
  OptimizerState optimizer;
  double mean_loss = 0.0;  ///< batch losses averaged over the epoch
};

/// One pass over a seeded shuffle of `data` in mini-batches (the last batch
/// may be short): v <- momentum * v - lr * g; w <- w + v. Inputs are not
/// modified. Throws NumericalDivergence on a non-finite loss or gradient.
EpochResult train_epoch(const ModelParameters& model, const OptimizerState& optimizer,
                        const LabeledDataset& data, std::size_t batch_size, Rng& rng);

double evaluate_accuracy(const ModelParameters& model, const LabeledDataset& data);

/// Element c is the accuracy on the samples labelled c. Every class must be
/// present in `data`.
std::vector<double> per_class_accuracy(const ModelParameters& model, const LabeledDataset& data);

/// Free-form key/value pairs stored in a checkpoint's text header.
using CheckpointMetadata = std::map<std::string, std::string>;

/// Text header (one "key value" per line, terminated by "end") followed by
/// the parameter values as little-endian IEEE-754 doubles.
void write_model(std::ostream& out, const ModelParameters& model,
                 const CheckpointMetadata& metadata = {});
ModelParameters read_model(std::istream& in, CheckpointMetadata* metadata = nullptr);

}  // namespace v2xfl
