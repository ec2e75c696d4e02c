#pragma once

// generate -> validate -> train-eval / calibrate -> report, driven by one JSON
// config file with command-line overrides. Relative paths in the config are
// resolved against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "saplma/dataset_forge.hpp"
#include "saplma/probe_net.hpp"

namespace saplma::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kGeneralFailure = 1,
  kValidationFailure = 2,
  kProtocolError = 3,
  kIoError = 4,
};

struct TopicSource {
  std::string topic;
  fs::path table;
  std::string entity_column;
  std::vector<forge::StatementTemplate> templates;
  fs::path curated; // set instead of table for curated topics
};

struct PipelineConfig {
  fs::path config_path;
  std::uint64_t seed = 0;

  // generate
  fs::path dataset_dir = "dataset";
  std::vector<TopicSource> topics;

  // store
  fs::path index;
  std::string source_model = "model";
  int depth = 0; // 0 = unchecked
  std::string activations;           // path pattern containing "{layer}"
  fs::path generated_index;
  std::string generated_activations; // path pattern containing "{layer}"
  fs::path embeddings;
  fs::path generated_embeddings;
  std::string embedding_label = "bert";
  std::vector<fs::path> few_shot;
  std::vector<fs::path> generated_few_shot;

  std::vector<int> layers;
  probe::TrainConfig train;

  // eval
  std::vector<std::string> protocols{"loto"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t generated_repetitions = 14;
  std::uint64_t generated_seed_base = 1000;
  double validation_fraction = 0.3;
  std::size_t threads = 0;
  std::optional<std::string> held_out;

  fs::path out_dir = "reports";
  std::string format = "table";

  // Throws Error{io} / Error{schema}.
  static PipelineConfig load(const fs::path& path);

  fs::path matrix_path(const std::string& pattern, int layer) const;
};

struct Overrides {
  std::vector<int> layers;
  std::optional<std::string> held_out;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<fs::path> out_dir;
  std::optional<std::string> format;
};

void apply(PipelineConfig& config, const Overrides& overrides);

// Each command writes results under the configured directories, prints a
// human summary to `out`, and on failure prints one JSON error line to `err`
// and returns the matching exit code.
int cmd_generate(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_validate(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_train_eval(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_calibrate(const PipelineConfig& config, std::ostream& out, std::ostream& err);
// Renders the report files given, or every *.json report in out_dir.
int cmd_report(const PipelineConfig& config, const std::vector<fs::path>& files, std::ostream& out,
               std::ostream& err);

// Problems found in the store; empty when consistent.
std::vector<std::string> validate_store(const PipelineConfig& config);

std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

} // namespace saplma::pipeline
