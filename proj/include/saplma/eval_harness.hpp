#pragma once

// Evaluation protocols and metrics for truthfulness probes.
//
// Predictions are "true" when score > threshold (strict). Leave-one-topic-out
// trains on every topic but one and tests on the held-out topic, repeating per
// seed; the generated-set protocol trains on the whole training index and
// tests on a disjoint statement set, optionally calibrating the threshold on a
// stratified validation slice of that set.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplma/activation_store.hpp"
#include "saplma/probe_net.hpp"

namespace saplma::eval {

using Labels = std::span<const std::uint8_t>;

std::vector<std::uint8_t> to_labels(const std::vector<bool>& flags);

// Fraction of rows with (score > threshold) == label. Throws Error{parameter}
// on empty or mismatched input.
double accuracy(std::span<const double> scores, Labels labels, double threshold);

// Mann-Whitney statistic from mid-ranks: P(s+ > s-) + P(s+ == s-)/2.
// Throws Error{undefined_metric} unless both classes are present.
double roc_auc(std::span<const double> scores, Labels labels);

struct RocPoint {
  double false_positive_rate;
  double true_positive_rate;
};

// Points from (0,0) to (1,1), one per distinct score, ties moving diagonally.
struct RocCurve {
  std::vector<RocPoint> points;

  // Trapezoidal area; equals roc_auc for the same input.
  double area() const;
};
RocCurve roc_curve(std::span<const double> scores, Labels labels);

double observed_agreement(Labels a, Labels b);
// (p_o - p_e) / (1 - p_e) with chance agreement from the marginal products;
// 1 when p_e == 1. Throws Error{parameter} on empty or mismatched input.
double cohens_kappa(Labels a, Labels b);

struct Calibration {
  double threshold;
  double accuracy; // on the calibration set
};

// Candidates: just below the minimum score, midpoints of adjacent distinct
// scores, just above the maximum. Returns the most accurate, lowest on ties.
// Throws Error{calibration} unless both classes are present.
Calibration calibrate_threshold(std::span<const double> scores, Labels labels);

struct ValidationSplit {
  std::vector<std::size_t> validation; // row positions, ascending
  std::vector<std::size_t> test;
};

// Seeded, label-stratified split with |validation| = llround(fraction * n).
// Throws Error{parameter} if n < 10 or fraction outside (0, 1).
ValidationSplit split_validation(Labels labels, double fraction, std::uint64_t seed);

// ------------------------------------------------------------------ reports

struct InputFile {
  std::string role;
  std::string path;
  std::string sha256;
};

struct Cell {
  std::string name; // held-out topic or set name
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies; // per seed
  std::vector<std::optional<double>> aucs;
  std::vector<double> thresholds;
  double accuracy_mean = 0.0;
  std::optional<double> auc_mean;
  double threshold_mean = 0.5;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> train_topics;
  std::string train_ids_digest;
  std::string config_fingerprint;
  // Audit trail: index rows the probe was trained on. Not serialized.
  std::vector<std::size_t> train_rows;

  void finalize_means();
};

struct EvalReport {
  std::string model;    // row label, e.g. "layer-20", "bert", "3-shot"
  std::string protocol; // "loto", "generated" or "calibrated"
  bool baseline = false;
  std::optional<int> layer;
  std::string source_model;
  std::size_t repetitions = 0;
  nlohmann::ordered_json config;
  std::string config_fingerprint;
  std::string kernel_isa;
  std::vector<InputFile> inputs;
  std::vector<Cell> cells;
  std::optional<double> average_accuracy;
  std::optional<double> average_auc;
  std::vector<std::string> notes;

  // Throws Error{validation} if any metric leaves [0,1] or a seed list
  // disagrees with the repetition count.
  void validate() const;
  void finalize_average();
};

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);

// Text tables: topic-by-model accuracy for "loto" reports, accuracy and AUC
// for "generated", average threshold and accuracy for "calibrated".
std::string render_table(const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------- protocols

struct RunOptions {
  // Worker threads for independent (topic, seed) cells; 0 = hardware count.
  std::size_t threads = 0;
  // Leave-one-topic-out: evaluate only this held-out topic.
  std::optional<std::string> held_out;
};

// Throws Error{protocol} with fewer than two topics or no seeds.
EvalReport leave_one_topic_out(const store::DatasetIndex& index, const store::ActivationMatrix& matrix,
                               int layer, const std::vector<std::uint64_t>& seeds,
                               const probe::TrainConfig& config, RunOptions options = {});

struct GeneratedReports {
  EvalReport plain;
  std::optional<EvalReport> calibrated;
};

// Trains once per seed on the whole training index and scores the generated
// set at threshold 0.5. With a calibration fraction, each seed also splits the
// generated set, picks a threshold on the validation part and reports accuracy
// on the rest. Throws Error{protocol} if any id appears in both sets.
GeneratedReports eval_generated(const store::DatasetIndex& train_index,
                                const store::ActivationMatrix& train_matrix,
                                const store::DatasetIndex& generated_index,
                                const store::ActivationMatrix& generated_matrix,
                                const std::vector<std::uint64_t>& seeds,
                                const probe::TrainConfig& config,
                                std::optional<double> calibration_fraction = std::nullopt,
                                RunOptions options = {});

// Seeds base, base+1, ... for repeated runs.
std::vector<std::uint64_t> seed_sequence(std::uint64_t base, std::size_t count);

// Short digest of the ids of the given rows, in order.
std::string ids_digest(const store::DatasetIndex& index, std::span<const std::size_t> rows);

} // namespace saplma::eval
