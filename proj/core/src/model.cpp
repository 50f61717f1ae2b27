#include "v2xfl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace {

constexpr std::string_view kModelMagic = "v2xfl-model 1";

// Offsets of the parameter blocks inside the flat vector.
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;

  explicit Layout(const ModelShape& s) {
    if (s.architecture == Architecture::logistic) {
      w2 = 0;
      b2 = s.num_classes * s.input_dim;
    } else {
      w1 = 0;
      b1 = s.hidden_width * s.input_dim;
      w2 = b1 + s.hidden_width;
      b2 = w2 + s.num_classes * s.hidden_width;
    }
  }
};

void check_features(const ModelParameters& m, std::span<const double> x) {
  if (x.size() != m.shape.input_dim) {
    throw ArgumentError(fmt::format("feature vector has {} values, model expects {}", x.size(),
                                    m.shape.input_dim));
  }
}

// Scratch buffers reused across samples.
struct Workspace {
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> delta_hidden;

  explicit Workspace(const ModelShape& s)
      : hidden_pre(s.hidden_width), hidden(s.hidden_width), logits(s.num_classes),
        delta_hidden(s.hidden_width) {}
};

void affine(std::span<const double> weights, std::span<const double> bias,
            std::span<const double> in, std::span<double> out) {
  const std::size_t n_in = in.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = weights.data() + r * n_in;
    double acc = bias[r];
    for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * in[j];
    out[r] = acc;
  }
}

// Fills ws.logits (and hidden activations for mlp).
void compute_logits(const ModelParameters& m, std::span<const double> x, Workspace& ws) {
  const auto& s = m.shape;
  const Layout at(s);
  const std::span<const double> v(m.values);
  if (s.architecture == Architecture::logistic) {
    affine(v.subspan(at.w2, s.num_classes * s.input_dim), v.subspan(at.b2, s.num_classes), x,
           ws.logits);
    return;
  }
  affine(v.subspan(at.w1, s.hidden_width * s.input_dim), v.subspan(at.b1, s.hidden_width), x,
         ws.hidden_pre);
  for (std::size_t h = 0; h < s.hidden_width; ++h) ws.hidden[h] = std::max(0.0, ws.hidden_pre[h]);
  affine(v.subspan(at.w2, s.num_classes * s.hidden_width), v.subspan(at.b2, s.num_classes),
         ws.hidden, ws.logits);
}

// Turns logits into probabilities in place; returns log-sum-exp.
double softmax_in_place(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - top);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return top + std::log(sum);
}

// Adds the cross-entropy gradient of one sample to `grad`; returns its loss.
double accumulate_sample(const ModelParameters& m, std::span<const double> x, Label y,
                         Workspace& ws, std::span<double> grad) {
  const auto& s = m.shape;
  const Layout at(s);
  compute_logits(m, x, ws);
  const double z_y = ws.logits[y];
  const double lse = softmax_in_place(ws.logits);
  const double loss = lse - z_y;

  auto& delta = ws.logits;  // p - onehot(y)
  delta[y] -= 1.0;

  const std::span<const double> input =
      s.architecture == Architecture::logistic ? x : std::span<const double>(ws.hidden);
  const std::size_t n_in = input.size();
  for (std::size_t k = 0; k < s.num_classes; ++k) {
    const double d = delta[k];
    double* row = grad.data() + at.w2 + k * n_in;
    for (std::size_t j = 0; j < n_in; ++j) row[j] += d * input[j];
    grad[at.b2 + k] += d;
  }
  if (s.architecture == Architecture::logistic) return loss;

  const double* w2 = m.values.data() + at.w2;
  for (std::size_t h = 0; h < s.hidden_width; ++h) {
    double back = 0.0;
    for (std::size_t k = 0; k < s.num_classes; ++k) back += w2[k * s.hidden_width + h] * delta[k];
    ws.delta_hidden[h] = ws.hidden_pre[h] > 0.0 ? back : 0.0;
  }
  for (std::size_t h = 0; h < s.hidden_width; ++h) {
    const double d = ws.delta_hidden[h];
    if (d == 0.0) continue;
    double* row = grad.data() + at.w1 + h * s.input_dim;
    for (std::size_t j = 0; j < s.input_dim; ++j) row[j] += d * x[j];
    grad[at.b1 + h] += d;
  }
  return loss;
}

double batch_gradient(const ModelParameters& m, const LabeledDataset& data,
                      std::span<const std::uint32_t> positions, Workspace& ws,
                      std::vector<double>& grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (auto pos : positions) {
    loss += accumulate_sample(m, data.features(pos), data.label(pos), ws, grad);
  }
  const double scale = 1.0 / static_cast<double>(positions.size());
  for (auto& g : grad) g *= scale;
  return loss * scale;
}

void check_compatible(const ModelParameters& m, const LabeledDataset& data) {
  if (data.dim() != m.shape.input_dim) {
    throw ArgumentError(fmt::format("dataset dim {} does not match model input dim {}",
                                    data.dim(), m.shape.input_dim));
  }
  if (data.num_classes() > m.shape.num_classes) {
    throw ArgumentError(fmt::format("dataset has {} classes, model outputs {}",
                                    data.num_classes(), m.shape.num_classes));
  }
}

}  // namespace

std::string_view to_string(Architecture arch) {
  return arch == Architecture::logistic ? "logistic" : "mlp";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "logistic") return Architecture::logistic;
  if (name == "mlp") return Architecture::mlp;
  throw ArgumentError(fmt::format("unknown architecture '{}'", name));
}

std::size_t ModelShape::parameter_count() const noexcept {
  if (architecture == Architecture::logistic) return num_classes * input_dim + num_classes;
  return hidden_width * input_dim + hidden_width + num_classes * hidden_width + num_classes;
}

OptimizerState OptimizerState::fresh(const OptimizerSettings& settings,
                                     std::size_t parameter_count) {
  return {settings.learning_rate, settings.momentum, std::vector<double>(parameter_count, 0.0)};
}

ModelShape make_shape(const ModelSpec& spec, std::size_t dim, std::size_t num_classes) {
  if (dim == 0 || num_classes < 2) {
    throw ArgumentError("model needs a positive input dim and at least two classes");
  }
  if (spec.architecture == Architecture::mlp && spec.hidden_width == 0) {
    throw ArgumentError("mlp needs a positive hidden width");
  }
  return {spec.architecture, dim,
          spec.architecture == Architecture::mlp ? spec.hidden_width : std::size_t{0},
          num_classes};
}

ModelParameters init_model(const ModelSpec& spec, std::size_t dim, std::size_t num_classes,
                           Rng& rng) {
  ModelParameters m{make_shape(spec, dim, num_classes), {}};
  const auto& s = m.shape;
  m.values.assign(s.parameter_count(), 0.0);
  const Layout at(s);
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) m.values[offset + i] = rng.uniform(-bound, bound);
  };
  if (s.architecture == Architecture::logistic) {
    fill(at.w2, s.num_classes * s.input_dim, s.input_dim);
  } else {
    fill(at.w1, s.hidden_width * s.input_dim, s.input_dim);
    fill(at.w2, s.num_classes * s.hidden_width, s.hidden_width);
  }
  return m;
}

ModelParameters init_model(const ModelSpec& spec, std::size_t dim, std::size_t num_classes) {
  Rng rng(spec.init_seed);
  return init_model(spec, dim, num_classes, rng);
}

std::vector<double> forward(const ModelParameters& model, std::span<const double> features) {
  check_features(model, features);
  Workspace ws(model.shape);
  compute_logits(model, features, ws);
  softmax_in_place(ws.logits);
  return ws.logits;
}

Label predict(const ModelParameters& model, std::span<const double> features) {
  check_features(model, features);
  Workspace ws(model.shape);
  compute_logits(model, features, ws);
  return static_cast<Label>(std::max_element(ws.logits.begin(), ws.logits.end()) -
                            ws.logits.begin());
}

LossGradient loss_and_gradient(const ModelParameters& model, const LabeledDataset& data,
                               std::span<const std::uint32_t> positions) {
  if (positions.empty()) throw ArgumentError("gradient of an empty batch");
  check_compatible(model, data);
  Workspace ws(model.shape);
  LossGradient out;
  out.gradient.resize(model.values.size());
  out.loss = batch_gradient(model, data, positions, ws, out.gradient);
  return out;
}

EpochResult train_epoch(const ModelParameters& model, const OptimizerState& optimizer,
                        const LabeledDataset& data, std::size_t batch_size, Rng& rng) {
  if (data.empty()) throw ArgumentError("train_epoch on an empty dataset");
  if (batch_size == 0) throw ArgumentError("batch size must be positive");
  check_compatible(model, data);
  if (optimizer.velocity.size() != model.values.size()) {
    throw ArgumentError("optimizer state does not match the model");
  }

  EpochResult out{model, optimizer, 0.0};
  std::vector<std::uint32_t> order(data.size());
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  rng.shuffle(std::span<std::uint32_t>(order));

  Workspace ws(model.shape);
  std::vector<double> grad(model.values.size());
  auto& w = out.model.values;
  auto& v = out.optimizer.velocity;
  const double lr = optimizer.learning_rate;
  const double mu = optimizer.momentum;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size, ++batches) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    const double loss = batch_gradient(out.model, data,
                                       std::span<const std::uint32_t>(order).subspan(start, len),
                                       ws, grad);
    if (!std::isfinite(loss)) throw NumericalDivergence(batches, "non-finite loss");
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(grad[i])) throw NumericalDivergence(batches, "non-finite gradient");
      v[i] = mu * v[i] - lr * grad[i];
      w[i] += v[i];
      if (!std::isfinite(w[i])) throw NumericalDivergence(batches, "non-finite parameter");
    }
    out.mean_loss += loss;
  }
  out.mean_loss /= static_cast<double>(batches);
  return out;
}

double evaluate_accuracy(const ModelParameters& model, const LabeledDataset& data) {
  if (data.empty()) throw ArgumentError("accuracy of an empty dataset");
  check_compatible(model, data);
  Workspace ws(model.shape);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    compute_logits(model, data.features(i), ws);
    const auto guess = std::max_element(ws.logits.begin(), ws.logits.end()) - ws.logits.begin();
    hits += static_cast<std::size_t>(guess) == data.label(i) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> per_class_accuracy(const ModelParameters& model, const LabeledDataset& data) {
  check_compatible(model, data);
  const auto& index = data.class_index();
  Workspace ws(model.shape);
  std::vector<double> acc(index.size());
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c].empty()) throw ArgumentError(fmt::format("class {} has no samples", c));
    std::size_t hits = 0;
    for (auto pos : index[c]) {
      compute_logits(model, data.features(pos), ws);
      const auto guess = std::max_element(ws.logits.begin(), ws.logits.end()) - ws.logits.begin();
      hits += static_cast<std::size_t>(guess) == c ? 1 : 0;
    }
    acc[c] = static_cast<double>(hits) / static_cast<double>(index[c].size());
  }
  return acc;
}

void write_model(std::ostream& out, const ModelParameters& model,
                 const CheckpointMetadata& metadata) {
  const auto& s = model.shape;
  out << kModelMagic << '\n'
      << "architecture " << to_string(s.architecture) << '\n'
      << "input_dim " << s.input_dim << '\n'
      << "hidden_width " << s.hidden_width << '\n'
      << "num_classes " << s.num_classes << '\n'
      << "values " << model.values.size() << '\n';
  for (const auto& [key, value] : metadata) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ArgumentError(fmt::format("checkpoint metadata '{}' is not header-safe", key));
    }
    out << "meta." << key << ' ' << value << '\n';
  }
  out << "end\n";
  for (double v : model.values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw CheckpointError("failed to write model checkpoint");
}

ModelParameters read_model(std::istream& in, CheckpointMetadata* metadata) {
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) {
    throw CheckpointError("not a v2xfl model checkpoint");
  }
  std::map<std::string, std::string> fields;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      terminated = true;
      break;
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) throw CheckpointError(fmt::format("bad header line '{}'", line));
    fields[line.substr(0, space)] = line.substr(space + 1);
  }
  if (!terminated) throw CheckpointError("checkpoint header is truncated");

  auto number = [&](const std::string& key) -> std::size_t {
    const auto it = fields.find(key);
    if (it == fields.end()) throw CheckpointError(fmt::format("checkpoint lacks '{}'", key));
    try {
      std::size_t used = 0;
      const auto v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw CheckpointError(fmt::format("checkpoint field '{}' is not a count", key));
    }
  };

  ModelParameters m;
  try {
    m.shape.architecture = parse_architecture(fields.count("architecture") ? fields["architecture"] : "");
  } catch (const ArgumentError& e) {
    throw CheckpointError(e.what());
  }
  m.shape.input_dim = number("input_dim");
  m.shape.hidden_width = number("hidden_width");
  m.shape.num_classes = number("num_classes");
  const std::size_t count = number("values");
  if (count != m.shape.parameter_count()) {
    throw CheckpointError(fmt::format("checkpoint stores {} values but its shape needs {}", count,
                                      m.shape.parameter_count()));
  }
  m.values.resize(count);
  for (auto& v : m.values) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw CheckpointError("checkpoint payload is truncated");
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw CheckpointError("checkpoint holds a non-finite value");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("checkpoint has trailing bytes");
  }
  if (metadata) {
    metadata->clear();
    for (const auto& [key, value] : fields) {
      if (key.starts_with("meta.")) (*metadata)[key.substr(5)] = value;
    }
  }
  return m;
}

}  // namespace v2xfl
