#pragma once

// Comparison baselines: the few-shot true/false token ratio classifier, and
// the probe trained on sentence embeddings instead of hidden states.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saplma/activation_store.hpp"
#include "saplma/eval_harness.hpp"

namespace saplma::baseline {

struct RatioScore {
  std::string id;
  double ratio = 0.0; // p_true / p_false
};

// Throws Error{data} unless both probabilities are positive and finite.
RatioScore few_shot_ratio(const store::FewShotRecord& record);

// true iff ratio > arithmetic mean of all ratios given (strict).
// Throws Error{parameter} on empty input.
std::vector<std::uint8_t> few_shot_classify(std::span<const RatioScore> ratios);

enum class Grouping {
  by_topic,  // one cell per topic, mean taken within the topic
  whole_set, // a single cell over every scored statement
};

// Scores every record with the given shot count against the index labels.
// Each cell's threshold field holds the mean ratio used as its cutoff; AUC
// ranks statements by ratio.
eval::EvalReport few_shot_report(const store::DatasetIndex& index,
                                 const std::vector<store::FewShotRecord>& records, int shots,
                                 Grouping grouping, const std::string& set_name = "generated");

// Probe pipeline run unchanged on an embedding matrix of any width.
eval::EvalReport embedding_loto(const store::DatasetIndex& index,
                                const store::ActivationMatrix& embeddings,
                                const std::vector<std::uint64_t>& seeds,
                                const probe::TrainConfig& config, eval::RunOptions options = {},
                                const std::string& label = "bert");

eval::GeneratedReports embedding_generated(const store::DatasetIndex& train_index,
                                           const store::ActivationMatrix& train_embeddings,
                                           const store::DatasetIndex& generated_index,
                                           const store::ActivationMatrix& generated_embeddings,
                                           const std::vector<std::uint64_t>& seeds,
                                           const probe::TrainConfig& config,
                                           std::optional<double> calibration_fraction,
                                           eval::RunOptions options = {},
                                           const std::string& label = "bert");

} // namespace saplma::baseline
