#include "saplma/probe_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "saplma/activation_store.hpp"
#include "saplma/error.hpp"
#include "saplma/hash.hpp"
#include "saplma/io.hpp"
#include "saplma/kernels.hpp"
#include "saplma/rng.hpp"

namespace saplma::probe {

std::size_t ProbeModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += l.weights.size() + l.bias.size();
  }
  return n;
}

bool ProbeModel::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return std::all_of(layers.begin(), layers.end(),
                     [&](const DenseLayer& l) { return finite(l.weights) && finite(l.bias); });
}

namespace {

std::vector<DenseLayer> zeros_shaped(const ProbeModel& model) {
  std::vector<DenseLayer> out;
  out.reserve(model.layers.size());
  for (const auto& l : model.layers) {
    out.emplace_back(l.fan_in, l.fan_out);
  }
  return out;
}

void check_same_shape(const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b,
                      const char* what) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].fan_in == b[i].fan_in && a[i].fan_out == b[i].fan_out &&
         a[i].weights.size() == b[i].weights.size() && a[i].bias.size() == b[i].bias.size();
  }
  if (!ok) {
    fail(ErrorKind::shape, std::string(what) + " does not match the model's shape");
  }
}

double sigmoid(double z) {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

// Per-example activations kept for the backward pass.
struct Workspace {
  std::vector<double> input;
  std::vector<std::vector<double>> z; // pre-activations per layer
  std::vector<std::vector<double>> a; // post-activations per layer
  std::vector<double> delta;
  std::vector<double> delta_below;

  explicit Workspace(const ProbeModel& model) : input(model.input_dim()) {
    for (const auto& l : model.layers) {
      z.emplace_back(l.fan_out);
      a.emplace_back(l.fan_out);
    }
  }
};

double run_forward(const ProbeModel& model, std::span<const double> x, Workspace& ws) {
  if (x.size() != model.input_dim()) {
    fail(ErrorKind::shape, "probe input has " + std::to_string(x.size()) + " features, expected " +
                               std::to_string(model.input_dim()));
  }
  if (model.input_mean.empty()) {
    std::copy(x.begin(), x.end(), ws.input.begin());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      ws.input[i] = (x[i] - model.input_mean[i]) * model.input_inv_std[i];
    }
  }
  const auto& k = kernels::active();
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const double* in = l == 0 ? ws.input.data() : ws.a[l - 1].data();
    auto& z = ws.z[l];
    auto& a = ws.a[l];
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      z[o] = k.dot(layer.weights.data() + o * layer.fan_in, in, layer.fan_in) + layer.bias[o];
    }
    if (l == last) {
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        a[o] = sigmoid(z[o]);
      }
    } else {
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        a[o] = z[o] > 0.0 ? z[o] : 0.0;
      }
    }
  }
  return ws.a[last][0];
}

std::size_t check_batch(const ProbeModel& model, BatchView batch) {
  const std::size_t rows = batch.labels.size();
  if (rows == 0) {
    fail(ErrorKind::parameter, "empty batch");
  }
  if (batch.features.size() != rows * model.input_dim()) {
    fail(ErrorKind::shape, "batch features hold " + std::to_string(batch.features.size()) +
                               " values, expected " + std::to_string(rows) + "x" +
                               std::to_string(model.input_dim()));
  }
  for (auto y : batch.labels) {
    if (y > 1) {
      fail(ErrorKind::parameter, "labels must be 0 or 1");
    }
  }
  return rows;
}

double example_loss(double p, std::uint8_t y) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return y ? -std::log(pc) : -std::log1p(-pc);
}

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2 || dims.back() != 1) {
    fail(ErrorKind::parameter, "layer dims must have at least two entries and end in 1");
  }
  if (dims.front() < 1) {
    fail(ErrorKind::parameter, "input_dim must be >= 1");
  }
  for (auto d : dims) {
    if (d < 1) {
      fail(ErrorKind::parameter, "layer widths must be >= 1");
    }
  }
}

} // namespace

AdamState AdamState::zeros_like(const ProbeModel& model) {
  AdamState s;
  s.first_moment = zeros_shaped(model);
  s.second_moment = zeros_shaped(model);
  return s;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::parameter, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::parameter, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::parameter, "learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail(ErrorKind::parameter, "beta1 must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorKind::parameter, "beta2 must be in [0,1)");
  if (!(epsilon > 0.0)) fail(ErrorKind::parameter, "epsilon must be > 0");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["standardize"] = c.standardize;
  j["loss"] = "binary_cross_entropy_clamped_1e-7";
  j["architecture"] = "input-256-128-64-1 relu/sigmoid";
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("standardize")) c.standardize = j["standardize"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string fingerprint(const TrainConfig& config) {
  auto j = to_json(config);
  j.erase("seed");
  return sha256_hex(j.dump()).substr(0, 16);
}

// ---------------------------------------------------------------- model

ProbeModel init_probe(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  validate_dims(layer_dims);
  ProbeModel m;
  m.layer_dims = std::move(layer_dims);
  m.seed = seed;
  Rng rng(seed);
  const std::size_t n_layers = m.layer_dims.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseLayer layer(m.layer_dims[l], m.layer_dims[l + 1]);
    const double gain = l + 1 == n_layers ? 3.0 : 6.0;
    const double bound = std::sqrt(gain / static_cast<double>(layer.fan_in));
    for (auto& w : layer.weights) {
      w = rng.uniform(-bound, bound);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

ProbeModel init_probe(std::size_t input_dim, std::uint64_t seed) {
  if (input_dim < 1) {
    fail(ErrorKind::parameter, "input_dim must be >= 1");
  }
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), kHiddenWidths.begin(), kHiddenWidths.end());
  dims.push_back(1);
  return init_probe(std::move(dims), seed);
}

double forward(const ProbeModel& model, std::span<const double> x) {
  Workspace ws(model);
  return run_forward(model, x, ws);
}

double forward(const ProbeModel& model, std::span<const float> x) {
  std::vector<double> wide(x.size());
  kernels::widen(x, wide);
  return forward(model, std::span<const double>(wide));
}

double batch_loss(const ProbeModel& model, BatchView batch) {
  const std::size_t rows = check_batch(model, batch);
  const std::size_t d = model.input_dim();
  Workspace ws(model);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    total += example_loss(run_forward(model, batch.features.subspan(r * d, d), ws), batch.labels[r]);
  }
  return total / static_cast<double>(rows);
}

LossAndGradients loss_and_gradients(const ProbeModel& model, BatchView batch) {
  const std::size_t rows = check_batch(model, batch);
  const std::size_t d = model.input_dim();
  const auto& k = kernels::active();
  const double inv_n = 1.0 / static_cast<double>(rows);

  LossAndGradients out;
  out.gradients.layers = zeros_shaped(model);
  out.predictions.reserve(rows);
  Workspace ws(model);
  double total = 0.0;

  for (std::size_t r = 0; r < rows; ++r) {
    const double p = run_forward(model, batch.features.subspan(r * d, d), ws);
    out.predictions.push_back(p);
    const std::uint8_t y = batch.labels[r];
    total += example_loss(p, y);

    // d(loss)/d(logit) is p - y while the clamp is inactive and 0 beyond it.
    const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
    ws.delta.assign(1, clamped ? 0.0 : (p - static_cast<double>(y)) * inv_n);

    for (std::size_t l = model.layers.size(); l-- > 0;) {
      const auto& layer = model.layers[l];
      auto& grad = out.gradients.layers[l];
      const double* in = l == 0 ? ws.input.data() : ws.a[l - 1].data();
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        const double g = ws.delta[o];
        if (g == 0.0) continue;
        k.axpy(g, in, grad.weights.data() + o * layer.fan_in, layer.fan_in);
        grad.bias[o] += g;
      }
      if (l == 0) break;
      ws.delta_below.assign(layer.fan_in, 0.0);
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        const double g = ws.delta[o];
        if (g == 0.0) continue;
        k.axpy(g, layer.weights.data() + o * layer.fan_in, ws.delta_below.data(), layer.fan_in);
      }
      const auto& z_below = ws.z[l - 1];
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        if (!(z_below[i] > 0.0)) ws.delta_below[i] = 0.0;
      }
      std::swap(ws.delta, ws.delta_below);
    }
  }
  out.loss = total * inv_n;
  return out;
}

void adam_step(ProbeModel& model, AdamState& state, const Gradients& gradients,
               const TrainConfig& config) {
  check_same_shape(model.layers, gradients.layers, "gradients");
  check_same_shape(model.layers, state.first_moment, "Adam first moment");
  check_same_shape(model.layers, state.second_moment, "Adam second moment");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const kernels::AdamCoefficients c{config.learning_rate, config.beta1,
                                    config.beta2,         config.epsilon,
                                    1.0 - std::pow(config.beta1, t),
                                    1.0 - std::pow(config.beta2, t)};
  const auto& k = kernels::active();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    auto& m = state.first_moment[l];
    auto& v = state.second_moment[l];
    const auto& g = gradients.layers[l];
    k.adam_update(p.weights.data(), m.weights.data(), v.weights.data(), g.weights.data(),
                  p.weights.size(), c);
    k.adam_update(p.bias.data(), m.bias.data(), v.bias.data(), g.bias.data(), p.bias.size(), c);
  }
}

// ---------------------------------------------------------------- training

namespace {

void check_training_set(const TrainingSet& data) {
  if (data.dim < 1) fail(ErrorKind::shape, "feature dim must be >= 1");
  if (data.features.size() % data.dim != 0) {
    fail(ErrorKind::shape, "feature buffer is not a whole number of rows");
  }
  if (data.rows.empty()) fail(ErrorKind::parameter, "training set is empty");
  if (data.rows.size() != data.labels.size()) {
    fail(ErrorKind::shape, "training rows and labels differ in length");
  }
  const std::size_t n_rows = data.features.size() / data.dim;
  for (auto r : data.rows) {
    if (r >= n_rows) fail(ErrorKind::shape, "training row index out of range");
  }
}

void fit_standardizer(ProbeModel& model, const TrainingSet& data) {
  const std::size_t d = data.dim;
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  for (auto r : data.rows) {
    const float* row = data.features.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) mean[i] += row[i];
  }
  const double n = static_cast<double>(data.rows.size());
  for (auto& m : mean) m /= n;
  for (auto r : data.rows) {
    const float* row = data.features.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = row[i] - mean[i];
      sq[i] += c * c;
    }
  }
  model.input_mean = std::move(mean);
  model.input_inv_std.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double sd = std::sqrt(sq[i] / n);
    model.input_inv_std[i] = sd > 0.0 ? 1.0 / sd : 1.0;
  }
}

constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

} // namespace

ProbeModel train_probe(const TrainingSet& data, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  check_training_set(data);

  ProbeModel model = init_probe(data.dim, config.seed);
  if (config.standardize) {
    fit_standardizer(model, data);
  }
  AdamState state = AdamState::zeros_like(model);
  Rng shuffle_rng(config.seed ^ kShuffleStream);

  const std::size_t n = data.rows.size();
  const std::size_t d = data.dim;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> features(std::min(config.batch_size, n) * d);
  std::vector<std::uint8_t> labels;
  const auto& k = kernels::active();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      labels.resize(count);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t pos = order[start + b];
        k.widen(data.features.data() + data.rows[pos] * d, features.data() + b * d, d);
        labels[b] = data.labels[pos];
      }
      const BatchView batch{std::span<const double>(features.data(), count * d), labels};
      auto lg = loss_and_gradients(model, batch);
      // Running accuracy uses the pre-update predictions.
      for (std::size_t b = 0; b < count; ++b) {
        correct += static_cast<std::size_t>((lg.predictions[b] > 0.5) == (labels[b] != 0));
      }
      adam_step(model, state, lg.gradients, config);
      loss_sum += lg.loss * static_cast<double>(count);
    }
    if (!model.all_finite()) {
      fail(ErrorKind::data, "training diverged: non-finite parameters after epoch " +
                                std::to_string(epoch));
    }
    if (on_epoch) {
      on_epoch(EpochLog{epoch, loss_sum / static_cast<double>(n),
                        static_cast<double>(correct) / static_cast<double>(n)});
    }
  }
  return model;
}

std::vector<double> predict(const ProbeModel& model, std::span<const float> features,
                            std::size_t dim, std::span<const std::size_t> rows) {
  if (dim != model.input_dim()) {
    fail(ErrorKind::shape, "feature dim " + std::to_string(dim) + " != probe input dim " +
                               std::to_string(model.input_dim()));
  }
  Workspace ws(model);
  std::vector<double> x(dim);
  std::vector<double> out;
  out.reserve(rows.size());
  const auto& k = kernels::active();
  for (auto r : rows) {
    if ((r + 1) * dim > features.size()) {
      fail(ErrorKind::shape, "prediction row index out of range");
    }
    k.widen(features.data() + r * dim, x.data(), dim);
    out.push_back(run_forward(model, x, ws));
  }
  return out;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr std::string_view kCheckpointMagic = "SAPLPRB1";

} // namespace

std::string encode_checkpoint(const ProbeModel& model, const TrainConfig& config) {
  nlohmann::ordered_json header;
  header["format"] = "saplma-probe";
  header["layer_dims"] = model.layer_dims;
  header["seed"] = model.seed;
  header["config"] = to_json(config);
  header["standardized"] = !model.input_mean.empty();
  const std::string json = header.dump();

  std::string out(kCheckpointMagic);
  const auto len = static_cast<std::uint64_t>(json.size());
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xff));
  out += json;
  for (const auto& l : model.layers) {
    out += store::encode_f64_block(l.weights, static_cast<std::uint32_t>(l.fan_in), l.fan_out);
    out += store::encode_f64_block(l.bias, static_cast<std::uint32_t>(l.fan_out), 1);
  }
  if (!model.input_mean.empty()) {
    const auto d = static_cast<std::uint32_t>(model.input_dim());
    out += store::encode_f64_block(model.input_mean, d, 1);
    out += store::encode_f64_block(model.input_inv_std, d, 1);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (!bytes.starts_with(kCheckpointMagic)) {
    fail(ErrorKind::bad_magic, "not a probe checkpoint (bad magic)");
  }
  bytes.remove_prefix(kCheckpointMagic.size());
  if (bytes.size() < 8) fail(ErrorKind::truncated, "checkpoint header truncated");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
  }
  bytes.remove_prefix(8);
  if (bytes.size() < len) fail(ErrorKind::truncated, "checkpoint header truncated");

  Checkpoint cp;
  bool standardized = false;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(0, static_cast<std::size_t>(len)));
    cp.model.layer_dims = header.at("layer_dims").get<std::vector<std::size_t>>();
    cp.model.seed = header.at("seed").get<std::uint64_t>();
    cp.config = train_config_from_json(header.at("config"));
    standardized = header.value("standardized", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("checkpoint header: ") + e.what());
  }
  validate_dims(cp.model.layer_dims);
  bytes.remove_prefix(static_cast<std::size_t>(len));

  for (std::size_t l = 0; l + 1 < cp.model.layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.fan_in = cp.model.layer_dims[l];
    layer.fan_out = cp.model.layer_dims[l + 1];
    layer.weights =
        store::decode_f64_block(bytes, static_cast<std::uint32_t>(layer.fan_in), layer.fan_out);
    layer.bias = store::decode_f64_block(bytes, static_cast<std::uint32_t>(layer.fan_out), 1);
    cp.model.layers.push_back(std::move(layer));
  }
  if (standardized) {
    const auto d = static_cast<std::uint32_t>(cp.model.input_dim());
    cp.model.input_mean = store::decode_f64_block(bytes, d, 1);
    cp.model.input_inv_std = store::decode_f64_block(bytes, d, 1);
  }
  if (!bytes.empty()) {
    fail(ErrorKind::trailing_data, "checkpoint has bytes past the last parameter block");
  }
  return cp;
}

void save_checkpoint(const ProbeModel& model, const TrainConfig& config,
                     const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model, config));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

} // namespace saplma::probe
