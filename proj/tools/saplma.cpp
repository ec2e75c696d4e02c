// saplma: dataset generation, store validation, probe training/evaluation and
// report rendering from one JSON config.

#include <iostream>

#include "CLI11.hpp"
#include "saplma/error.hpp"
#include "saplma/pipeline.hpp"

namespace pl = saplma::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Truthfulness probes over language-model activations"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<int> layers;
  std::string held_out;
  std::string seeds;
  std::string out_dir;
  std::string format;
  std::vector<std::string> report_files;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--out", out_dir, "report directory");
  };
  auto add_eval = [&](CLI::App* sub) {
    sub->add_option("--layer", layers, "layer to use (repeatable)");
    sub->add_option("--held-out", held_out, "evaluate a single held-out topic");
    sub->add_option("--seeds", seeds, "comma-separated training seeds");
    sub->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
  };

  auto* generate = app.add_subcommand("generate", "build labelled statement datasets");
  add_common(generate);
  auto* validate = app.add_subcommand("validate", "check activation store consistency");
  add_common(validate);
  validate->add_option("--layer", layers, "layer to check (repeatable)");
  auto* train_eval = app.add_subcommand("train-eval", "train probes and evaluate");
  add_common(train_eval);
  add_eval(train_eval);
  auto* calibrate = app.add_subcommand("calibrate", "generated-set evaluation with a calibrated threshold");
  add_common(calibrate);
  add_eval(calibrate);
  auto* report = app.add_subcommand("report", "render saved reports");
  add_common(report);
  report->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
  report->add_option("files", report_files, "report files (default: every *.json in the report directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pl::kValidationFailure;
  }

  pl::PipelineConfig config;
  try {
    config = pl::PipelineConfig::load(config_path);
    pl::Overrides o;
    o.layers = layers;
    if (!held_out.empty()) o.held_out = held_out;
    if (!seeds.empty()) o.seeds = pl::parse_seed_list(seeds);
    if (!out_dir.empty()) o.out_dir = out_dir;
    if (!format.empty()) o.format = format;
    pl::apply(config, o);
  } catch (const saplma::Error& e) {
    std::cerr << R"({"error":{"stage":"config","kind":")" << saplma::to_string(e.kind())
              << R"(","message":)" << nlohmann::json(e.what()).dump() << "}}\n";
    return e.kind() == saplma::ErrorKind::io ? pl::kIoError : pl::kValidationFailure;
  }

  if (*generate) return pl::cmd_generate(config, std::cout, std::cerr);
  if (*validate) return pl::cmd_validate(config, std::cout, std::cerr);
  if (*train_eval) return pl::cmd_train_eval(config, std::cout, std::cerr);
  if (*calibrate) return pl::cmd_calibrate(config, std::cout, std::cerr);
  std::vector<std::filesystem::path> files(report_files.begin(), report_files.end());
  return pl::cmd_report(config, files, std::cout, std::cerr);
}
