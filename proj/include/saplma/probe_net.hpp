#pragma once

// Feedforward truthfulness probe: input -> 256 -> 128 -> 64 -> 1, ReLU on the
// hidden layers and a sigmoid output, trained with mean binary cross-entropy
// and Adam. Gradients are derived by hand; all arithmetic is double precision
// and the dense loops go through saplma::kernels.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace saplma::probe {

inline constexpr std::array<std::size_t, 3> kHiddenWidths{256, 128, 64};

// Predictions are clamped to [kProbClamp, 1 - kProbClamp] inside the loss.
inline constexpr double kProbClamp = 1e-7;

struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights; // fan_out x fan_in, row-major
  std::vector<double> bias;    // fan_out

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : fan_in(in), fan_out(out), weights(in * out, 0.0), bias(out, 0.0) {}

  bool operator==(const DenseLayer&) const = default;
};

struct ProbeModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;
  // Per-feature standardisation applied before the first layer; both empty
  // when disabled.
  std::vector<double> input_mean;
  std::vector<double> input_inv_std;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const ProbeModel&) const = default;
};

// Same shapes as the model's layers.
struct Gradients {
  std::vector<DenseLayer> layers;
};

struct AdamState {
  std::vector<DenseLayer> first_moment;
  std::vector<DenseLayer> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ProbeModel& model);
};

struct TrainConfig {
  int epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool standardize = false;

  // Throws Error{parameter}.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
// Hex SHA-256 of the canonical JSON form; seed excluded so runs that differ
// only by seed share a fingerprint.
std::string fingerprint(const TrainConfig& config);

// Standard architecture [input_dim, 256, 128, 64, 1]. Weights are uniform in
// +-sqrt(6 / fan_in) for layers feeding a ReLU and +-sqrt(3 / fan_in) for the
// sigmoid output layer; biases are zero. Throws Error{parameter} if
// input_dim < 1.
ProbeModel init_probe(std::size_t input_dim, std::uint64_t seed);
// Arbitrary widths with the same scheme; used for small test networks.
ProbeModel init_probe(std::vector<std::size_t> layer_dims, std::uint64_t seed);

// Probability that the statement is true, strictly inside (0, 1).
// Throws Error{shape} on a dimension mismatch.
double forward(const ProbeModel& model, std::span<const double> x);
double forward(const ProbeModel& model, std::span<const float> x);

// Row-major features (rows x input_dim) with one 0/1 label per row.
struct BatchView {
  std::span<const double> features;
  std::span<const std::uint8_t> labels;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
  std::vector<double> predictions; // one per batch row
};

// Mean clamped binary cross-entropy and its exact gradient.
LossAndGradients loss_and_gradients(const ProbeModel& model, BatchView batch);

// Loss alone (no backward pass).
double batch_loss(const ProbeModel& model, BatchView batch);

// One bias-corrected Adam update in place; step is incremented first.
void adam_step(ProbeModel& model, AdamState& state, const Gradients& gradients,
               const TrainConfig& config);

// Selected rows of a float feature matrix.
struct TrainingSet {
  std::span<const float> features; // row-major, dim columns
  std::size_t dim = 0;
  std::span<const std::size_t> rows;
  std::span<const std::uint8_t> labels; // aligned with rows
};

struct EpochLog {
  int epoch = 0; // 1-based
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

// Exactly config.epochs passes, each over a freshly seeded shuffle of the
// rows in mini-batches of config.batch_size (the last may be short). No early
// stopping. Deterministic given the data and config.
ProbeModel train_probe(const TrainingSet& data, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch = {});

// Probabilities for the selected rows.
std::vector<double> predict(const ProbeModel& model, std::span<const float> features,
                            std::size_t dim, std::span<const std::size_t> rows);

// Checkpoint: "SAPLPRB1", u64 little-endian JSON length, the JSON header
// (layer_dims, seed, config, standardized), then binary64 parameter blocks in
// layer order (weights fan_out x fan_in, bias 1 x fan_out), then the
// standardisation mean and inverse std when present.
struct Checkpoint {
  ProbeModel model;
  TrainConfig config;
};
std::string encode_checkpoint(const ProbeModel& model, const TrainConfig& config);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ProbeModel& model, const TrainConfig& config,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace saplma::probe
