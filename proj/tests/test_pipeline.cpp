#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "saplma/activation_store.hpp"
#include "saplma/error.hpp"
#include "saplma/hash.hpp"
#include "saplma/io.hpp"
#include "saplma/pipeline.hpp"
#include "saplma/synthetic.hpp"
#include "support.hpp"

using namespace saplma;
namespace pl = saplma::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config over the bundled sample tables with everything written under `dir`.
fs::path write_config(const fs::path& dir, std::uint64_t seed = 7) {
  auto sample = json::parse(read_file(testsupport::data_dir() / "sample_config.json"));
  for (auto& t : sample["generate"]["topics"]) {
    for (const char* key : {"table", "curated"}) {
      if (t.contains(key)) t[key] = (testsupport::data_dir() / t[key].get<std::string>()).string();
    }
  }
  sample["seed"] = seed;
  sample["generate"]["out_dir"] = "dataset";
  sample["store"] = {{"index", "dataset/dataset.jsonl"},
                     {"source_model", "synthetic"},
                     {"depth", 32},
                     {"activations", "store/layer-{layer}.f32"}};
  sample["train"] = {{"epochs", 2}};
  sample["eval"] = {{"protocols", {"loto"}}, {"seeds", {0, 1}}, {"threads", 1}};
  sample["out_dir"] = "reports";
  write_file_atomic(dir / "config.json", sample.dump(2));
  return dir / "config.json";
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

template <typename Cmd>
Run run(Cmd cmd, const pl::PipelineConfig& c) {
  std::ostringstream out, err;
  const int code = cmd(c, out, err);
  return {code, out.str(), err.str()};
}

void write_store(const pl::PipelineConfig& c) {
  const auto index = store::DatasetIndex::load(c.index);
  for (int layer : c.layers) {
    synthetic::Spec spec;
    spec.seed = static_cast<std::uint64_t>(layer);
    store::write_activation_matrix(synthetic::make_matrix(index, spec), c.matrix_path(c.activations, layer));
  }
}

std::map<std::string, std::string> files_in(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

} // namespace

TEST_CASE("generate: counts, balance, provenance of false values, determinism") {
  const auto dir = testsupport::temp_dir("pipe-generate");
  auto c = pl::PipelineConfig::load(write_config(dir));
  const auto r = run(pl::cmd_generate, c);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Cities") != std::string::npos);

  const auto all = forge::read_dataset(dir / "dataset" / "dataset.jsonl");
  const auto summary = json::parse(read_file(dir / "dataset" / "summary.json"));
  std::size_t total = 0;
  for (const auto& s : summary) {
    std::size_t t = 0, f = 0;
    for (const auto& st : all) {
      if (st.topic == s["topic"]) (st.label ? t : f)++;
    }
    CHECK(s["true"] == t);
    CHECK(s["false"] == f);
    CHECK(t - f <= s["skipped"].get<std::size_t>());
    total += t + f;
  }
  CHECK(total == all.size());

  const auto first = files_in(dir / "dataset");
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  CHECK(files_in(dir / "dataset") == first);

  c.seed = 8;
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  CHECK(files_in(dir / "dataset") != first);
}

TEST_CASE("generate: missing table names the path") {
  const auto dir = testsupport::temp_dir("pipe-missing");
  auto c = pl::PipelineConfig::load(write_config(dir));
  c.topics[0].table = dir / "no-such-table.csv";
  const auto r = run(pl::cmd_generate, c);
  CHECK(r.code == pl::kIoError);
  const auto line = json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(line["error"]["stage"] == "generate");
  CHECK(line["error"]["message"].get<std::string>().find("no-such-table.csv") != std::string::npos);
}

TEST_CASE("validate: pass, count mismatch, injected NaN") {
  const auto dir = testsupport::temp_dir("pipe-validate");
  const auto c = pl::PipelineConfig::load(write_config(dir));
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  write_store(c);
  auto ok = run(pl::cmd_validate, c);
  CHECK(ok.code == 0);
  CHECK(pl::validate_store(c).empty());

  const auto index = store::DatasetIndex::load(c.index);
  const auto path20 = c.matrix_path(c.activations, 20);
  auto m = store::read_activation_matrix(path20);
  auto shorter = m;
  shorter.count -= 1;
  shorter.data.resize(shorter.data.size() - shorter.dim);
  store::write_activation_matrix(shorter, path20);
  auto bad = run(pl::cmd_validate, c);
  CHECK(bad.code == pl::kValidationFailure);
  CHECK(bad.out.find(std::to_string(index.size() - 1)) != std::string::npos);
  CHECK(bad.out.find(std::to_string(index.size())) != std::string::npos);

  // NaN written into row 7's bytes directly, bypassing the writer's check.
  auto bytes = store::encode_activation_matrix(m);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + store::kHeaderBytes + (7 * m.dim + 3) * sizeof(float), &nan, sizeof nan);
  write_file_atomic(path20, bytes);
  auto nan_run = run(pl::cmd_validate, c);
  CHECK(nan_run.code == pl::kValidationFailure);
  CHECK(nan_run.out.find(index[7].id) != std::string::npos);

  // Training refuses an invalid store.
  CHECK(run(pl::cmd_train_eval, c).code == pl::kValidationFailure);
}

TEST_CASE("train-eval: one report per layer, deterministic, provenance") {
  const auto dir = testsupport::temp_dir("pipe-train");
  const auto c = pl::PipelineConfig::load(write_config(dir));
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  write_store(c);
  const auto r = run(pl::cmd_train_eval, c);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Leave-one-topic-out") != std::string::npos);

  const auto index = store::DatasetIndex::load(c.index);
  for (int layer : c.layers) {
    const auto path = c.out_dir / ("layer-" + std::to_string(layer) + "-loto.json");
    REQUIRE(fs::exists(path));
    const auto j = json::parse(read_file(path));
    CHECK(j["cells"].size() == 6);
    CHECK(j["average"].contains("accuracy"));
    CHECK(j["layer"] == layer);
    CHECK(j["config"]["epochs"] == 2);
    CHECK(j["config"]["batch_size"] == 32);
    CHECK(j["config"]["learning_rate"] == 1e-3);
    for (const auto& cell : j["cells"]) {
      CHECK(cell["seeds"] == json::array({0, 1}));
      CHECK(cell["config_fingerprint"] == j["config_fingerprint"]);
      for (const auto& t : cell["train_topics"]) CHECK(t != cell["name"]);
    }
    for (const auto& in : j["inputs"]) {
      CHECK(in["sha256"] == sha256_file(in["path"].get<std::string>()));
    }
  }
  const auto first = files_in(c.out_dir);
  REQUIRE(run(pl::cmd_train_eval, c).code == 0);
  CHECK(files_in(c.out_dir) == first);

  std::ostringstream out, err;
  CHECK(pl::cmd_report(c, {}, out, err) == 0);
  CHECK(out.str().find("layer-32") != std::string::npos);
}

TEST_CASE("overrides: held-out topic, layers, seeds, JSON output") {
  const auto dir = testsupport::temp_dir("pipe-held");
  auto c = pl::PipelineConfig::load(write_config(dir));
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  write_store(c);
  pl::Overrides o;
  o.layers = {20};
  o.held_out = "Animals";
  o.seeds = pl::parse_seed_list("3, 4,5");
  o.out_dir = dir / "held";
  o.format = "json";
  pl::apply(c, o);
  const auto r = run(pl::cmd_train_eval, c);
  REQUIRE(r.code == 0);
  const auto reports = json::parse(r.out);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0]["cells"].size() == 1);
  CHECK(reports[0]["cells"][0]["name"] == "Animals");
  CHECK(reports[0]["cells"][0]["seeds"] == json::array({3, 4, 5}));
  CHECK(fs::exists(dir / "held" / "layer-20-loto.json"));

  CHECK_THROWS_AS(pl::parse_seed_list("1,x"), Error);
  CHECK_THROWS_AS(pl::parse_seed_list(""), Error);
  pl::Overrides bad;
  bad.format = "xml";
  CHECK_THROWS_AS(pl::apply(c, bad), Error);

  c.held_out = "Music";
  CHECK(run(pl::cmd_train_eval, c).code == pl::kProtocolError);
}

TEST_CASE("calibrate needs a generated set") {
  const auto dir = testsupport::temp_dir("pipe-cal");
  const auto c = pl::PipelineConfig::load(write_config(dir));
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  write_store(c);
  CHECK(run(pl::cmd_calibrate, c).code == pl::kProtocolError);
}

TEST_CASE("calibrate and generated protocol with a generated set") {
  const auto dir = testsupport::temp_dir("pipe-gen");
  auto cfg = json::parse(read_file(write_config(dir)));
  cfg["store"]["generated_index"] = "gen/generated.jsonl";
  cfg["store"]["generated_activations"] = "gen/layer-{layer}.f32";
  cfg["layers"] = {28};
  cfg["eval"]["protocols"] = {"loto", "generated"};
  cfg["eval"]["generated_repetitions"] = 3;
  write_file_atomic(dir / "config.json", cfg.dump());
  const auto c = pl::PipelineConfig::load(dir / "config.json");
  REQUIRE(run(pl::cmd_generate, c).code == 0);
  write_store(c);
  const auto gen = synthetic::make_index({"generated"}, 40, 3);
  std::vector<forge::LabeledStatement> statements;
  for (const auto& e : gen.entries()) {
    statements.push_back(forge::make_statement(e.topic, e.text, e.label, forge::Origin::generated));
  }
  forge::write_dataset(c.generated_index, statements);
  synthetic::Spec spec;
  spec.seed = 5;
  store::write_activation_matrix(synthetic::make_matrix(store::DatasetIndex::load(c.generated_index), spec),
                                 c.matrix_path(c.generated_activations, 28));

  REQUIRE(run(pl::cmd_train_eval, c).code == 0);
  CHECK(fs::exists(c.out_dir / "layer-28-generated.json"));
  const auto cal = run(pl::cmd_calibrate, c);
  REQUIRE(cal.code == 0);
  const auto j = json::parse(read_file(c.out_dir / "layer-28-calibrated.json"));
  CHECK(j["cells"][0]["seeds"].size() == 3);
  CHECK(cal.out.find("calibrated threshold") != std::string::npos);
}

#ifdef SAPLMA_CLI_PATH
TEST_CASE("command-line exit codes") {
  const auto dir = testsupport::temp_dir("pipe-cli");
  const auto config = write_config(dir);
  const std::string cli = SAPLMA_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int raw = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(status("generate --config " + config.string()) == 0);
  CHECK(status("frobnicate") == 2);
  CHECK(status("train-eval --config " + config.string() + " --format xml") == 2);
  CHECK(status("validate --config " + (dir / "missing.json").string()) == 4);
  CHECK(status("validate --config " + config.string()) == 2);
  write_store(pl::PipelineConfig::load(config));
  CHECK(status("validate --config " + config.string()) == 0);
  CHECK(status("train-eval --config " + config.string() + " --layer 20 --held-out Cities --seeds 1") == 0);
  CHECK(status("train-eval --config " + config.string() + " --held-out Nowhere --layer 20") == 3);
  CHECK(status("report --config " + config.string() + " --format json") == 0);
}
#endif
