#include "saplma/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <sstream>

#include "saplma/activation_store.hpp"
#include "saplma/baselines.hpp"
#include "saplma/error.hpp"
#include "saplma/eval_harness.hpp"
#include "saplma/hash.hpp"
#include "saplma/io.hpp"

namespace saplma::pipeline {

namespace {

fs::path resolve(const fs::path& base_dir, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::io: return kIoError;
  case ErrorKind::protocol:
  case ErrorKind::lookup:
  case ErrorKind::undefined_metric:
  case ErrorKind::calibration: return kProtocolError;
  default: return kValidationFailure;
  }
}

void error_line(std::ostream& err, const std::string& stage, std::string_view kind,
                const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"stage", stage}, {"kind", kind}, {"message", message}};
  err << j.dump() << '\n';
}

template <typename Fn>
int run_stage(const std::string& stage, std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    error_line(err, stage, to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    error_line(err, stage, "internal", e.what());
    return kGeneralFailure;
  }
}

std::uint64_t topic_seed(std::uint64_t seed, const std::string& topic) {
  return seed ^ std::stoull(sha256_hex(topic).substr(0, 16), nullptr, 16);
}

bool has_protocol(const PipelineConfig& c, const std::string& name) {
  return std::find(c.protocols.begin(), c.protocols.end(), name) != c.protocols.end();
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

} // namespace

// ---------------------------------------------------------------- config

PipelineConfig PipelineConfig::load(const fs::path& path) {
  PipelineConfig c;
  c.config_path = path;
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, path.string() + ": " + e.what());
  }
  try {
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("generate")) {
      const auto& g = j["generate"];
      c.dataset_dir = resolve(base, get_or<std::string>(g, "out_dir", "dataset"));
      for (const auto& t : g.value("topics", nlohmann::json::array())) {
        TopicSource src;
        src.topic = t.at("topic").get<std::string>();
        if (t.contains("curated")) {
          src.curated = resolve(base, t["curated"].get<std::string>());
        } else {
          src.table = resolve(base, t.at("table").get<std::string>());
          src.entity_column = t.at("entity_column").get<std::string>();
          for (const auto& tt : t.at("templates")) {
            src.templates.push_back({tt.at("attribute").get<std::string>(),
                                     tt.at("pattern").get<std::string>()});
          }
        }
        c.topics.push_back(std::move(src));
      }
    } else {
      c.dataset_dir = resolve(base, c.dataset_dir);
    }
    if (j.contains("store")) {
      const auto& s = j["store"];
      c.index = resolve(base, get_or<std::string>(s, "index", ""));
      c.source_model = get_or<std::string>(s, "source_model", c.source_model);
      c.depth = get_or<int>(s, "depth", 0);
      if (s.contains("activations")) c.activations = resolve(base, s["activations"].get<std::string>()).string();
      c.generated_index = resolve(base, get_or<std::string>(s, "generated_index", ""));
      if (s.contains("generated_activations")) {
        c.generated_activations = resolve(base, s["generated_activations"].get<std::string>()).string();
      }
      c.embeddings = resolve(base, get_or<std::string>(s, "embeddings", ""));
      c.generated_embeddings = resolve(base, get_or<std::string>(s, "generated_embeddings", ""));
      c.embedding_label = get_or<std::string>(s, "embedding_label", c.embedding_label);
      for (const auto& f : s.value("few_shot", std::vector<std::string>{})) c.few_shot.push_back(resolve(base, f));
      for (const auto& f : s.value("generated_few_shot", std::vector<std::string>{})) {
        c.generated_few_shot.push_back(resolve(base, f));
      }
    }
    c.layers = j.value("layers", std::vector<int>{});
    if (j.contains("train")) c.train = probe::train_config_from_json(j["train"]);
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.protocols = e.value("protocols", c.protocols);
      c.seeds = e.value("seeds", c.seeds);
      c.generated_repetitions = e.value("generated_repetitions", c.generated_repetitions);
      c.generated_seed_base = e.value("generated_seed_base", c.generated_seed_base);
      c.validation_fraction = e.value("validation_fraction", c.validation_fraction);
      c.threads = e.value("threads", c.threads);
      if (e.contains("held_out")) c.held_out = e["held_out"].get<std::string>();
    }
    c.out_dir = resolve(base, get_or<std::string>(j, "out_dir", "reports"));
    c.format = get_or<std::string>(j, "format", c.format);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, path.string() + ": " + e.what());
  }
  for (const auto& p : c.protocols) {
    if (p != "loto" && p != "generated") {
      fail(ErrorKind::schema, path.string() + ": unknown protocol '" + p + "'");
    }
  }
  return c;
}

fs::path PipelineConfig::matrix_path(const std::string& pattern, int layer) const {
  std::string p = pattern;
  const std::string key = "{layer}";
  if (auto pos = p.find(key); pos != std::string::npos) {
    p.replace(pos, key.size(), std::to_string(layer));
  }
  return p;
}

void apply(PipelineConfig& c, const Overrides& o) {
  if (!o.layers.empty()) c.layers = o.layers;
  if (o.held_out) c.held_out = o.held_out;
  if (o.seeds) c.seeds = *o.seeds;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.format) {
    if (*o.format != "json" && *o.format != "table") {
      fail(ErrorKind::parameter, "format must be json or table");
    }
    c.format = *o.format;
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    try {
      seeds.push_back(std::stoull(item, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') {
      fail(ErrorKind::parameter, "bad seed '" + item + "'");
    }
  }
  if (seeds.empty()) fail(ErrorKind::parameter, "empty seed list");
  return seeds;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return run_stage("generate", err, [&] {
    if (config.topics.empty()) {
      fail(ErrorKind::schema, "config has no generate.topics");
    }
    std::vector<forge::LabeledStatement> all;
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    std::size_t total_true = 0, total_false = 0, total_skips = 0;
    std::ostringstream table;
    table << "topic                 true  false  skipped\n";
    for (const auto& src : config.topics) {
      forge::TopicDataset ds;
      if (!src.curated.empty()) {
        ds.statements = forge::load_curated_statements(src.curated, src.topic);
      } else {
        const auto t = forge::load_property_table(src.table, src.topic, src.entity_column);
        Rng rng(topic_seed(config.seed, src.topic));
        ds = forge::generate_topic_dataset(t, src.templates, rng);
      }
      for (const auto& skip : ds.skips) {
        nlohmann::ordered_json s;
        s["skip"] = {{"topic", src.topic}, {"entity", skip.entity}, {"attribute", skip.attribute},
                     {"reason", skip.reason}};
        err << s.dump() << '\n';
      }
      forge::write_dataset(config.dataset_dir / (src.topic + ".jsonl"), ds.statements);
      const auto n_true = ds.count(true), n_false = ds.count(false);
      summary.push_back({{"topic", src.topic}, {"true", n_true}, {"false", n_false},
                         {"skipped", ds.skips.size()}});
      char line[128];
      std::snprintf(line, sizeof line, "%-20s %6zu %6zu %8zu\n", src.topic.c_str(), n_true, n_false,
                    ds.skips.size());
      table << line;
      total_true += n_true;
      total_false += n_false;
      total_skips += ds.skips.size();
      all.insert(all.end(), ds.statements.begin(), ds.statements.end());
    }
    char line[128];
    std::snprintf(line, sizeof line, "%-20s %6zu %6zu %8zu\n", "total", total_true, total_false, total_skips);
    table << line;
    forge::write_dataset(config.dataset_dir / "dataset.jsonl", all);
    write_file_atomic(config.dataset_dir / "summary.json", summary.dump(2) + "\n");
    out << table.str();
    return int{kOk};
  });
}

// ---------------------------------------------------------------- validate

namespace {

struct LoadedMatrix {
  std::optional<store::ActivationMatrix> matrix;
};

void check_matrix(const fs::path& path, const store::DatasetIndex* index, const std::string& label,
                  std::optional<std::uint32_t>& dim, std::vector<std::string>& problems) {
  store::ActivationMatrix m;
  try {
    m = store::read_activation_matrix(path);
  } catch (const Error& e) {
    problems.push_back(label + ": " + e.what());
    return;
  }
  if (index && m.count != index->size()) {
    problems.push_back(label + " (" + path.string() + "): matrix count " + std::to_string(m.count) +
                       " != index count " + std::to_string(index->size()));
  }
  if (dim && *dim != m.dim) {
    problems.push_back(label + " (" + path.string() + "): dim " + std::to_string(m.dim) +
                       " differs from " + std::to_string(*dim));
  }
  if (!dim) dim = m.dim;
  for (auto r : store::nonfinite_rows(m)) {
    std::string id = index && r < index->size() ? (*index)[r].id : "?";
    problems.push_back(label + " (" + path.string() + "): non-finite value in row " +
                       std::to_string(r) + " (id " + id + ")");
  }
}

std::optional<store::DatasetIndex> load_index(const fs::path& path, const std::string& label,
                                              std::vector<std::string>& problems) {
  try {
    return store::DatasetIndex::load(path);
  } catch (const Error& e) {
    problems.push_back(label + ": " + e.what());
    return std::nullopt;
  }
}

void check_few_shot(const fs::path& path, const store::DatasetIndex* index,
                    std::vector<std::string>& problems) {
  try {
    const auto recs = store::read_few_shot(path);
    if (index) {
      for (auto& p : store::validate_few_shot(*index, recs)) problems.push_back(path.string() + ": " + p);
    }
  } catch (const Error& e) {
    problems.push_back(path.string() + ": " + e.what());
  }
}

} // namespace

std::vector<std::string> validate_store(const PipelineConfig& c) {
  std::vector<std::string> problems;
  if (c.index.empty()) {
    problems.push_back("config has no store.index");
    return problems;
  }
  auto index = load_index(c.index, "index", problems);
  const store::DatasetIndex* idx = index ? &*index : nullptr;
  if (idx && idx->topics().size() < 2) {
    problems.push_back("index has fewer than two topics");
  }
  if (c.layers.empty()) {
    problems.push_back("no layers configured");
  }
  if (c.depth > 0 && !c.layers.empty()) {
    try {
      store::LayerSet{c.layers}.validate(c.depth);
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
  }
  std::optional<std::uint32_t> dim;
  if (!c.layers.empty() && c.activations.empty()) {
    problems.push_back("config has no store.activations pattern");
  }
  if (!c.activations.empty()) {
    for (int layer : c.layers) {
      check_matrix(c.matrix_path(c.activations, layer), idx, "layer " + std::to_string(layer), dim, problems);
    }
  }
  std::optional<store::DatasetIndex> gen;
  if (!c.generated_index.empty()) {
    gen = load_index(c.generated_index, "generated index", problems);
    if (gen && idx) {
      for (const auto& e : gen->entries()) {
        if (idx->find(e.id)) {
          problems.push_back("generated statement " + e.id + " also appears in the training index");
        }
      }
    }
    if (!c.generated_activations.empty()) {
      for (int layer : c.layers) {
        check_matrix(c.matrix_path(c.generated_activations, layer), gen ? &*gen : nullptr,
                     "generated layer " + std::to_string(layer), dim, problems);
      }
    }
  }
  std::optional<std::uint32_t> emb_dim;
  if (!c.embeddings.empty()) check_matrix(c.embeddings, idx, "embeddings", emb_dim, problems);
  if (!c.generated_embeddings.empty()) {
    check_matrix(c.generated_embeddings, gen ? &*gen : nullptr, "generated embeddings", emb_dim, problems);
  }
  for (const auto& f : c.few_shot) check_few_shot(f, idx, problems);
  for (const auto& f : c.generated_few_shot) check_few_shot(f, gen ? &*gen : nullptr, problems);
  return problems;
}

int cmd_validate(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return run_stage("validate", err, [&] {
    const auto problems = validate_store(config);
    if (problems.empty()) {
      out << "store OK\n";
      return int{kOk};
    }
    for (const auto& p : problems) out << "violation: " << p << '\n';
    error_line(err, "validate", "validation", std::to_string(problems.size()) + " violation(s)");
    return int{kValidationFailure};
  });
}

// ---------------------------------------------------------------- train / eval

namespace {

class Runner {
public:
  Runner(const PipelineConfig& c, std::ostream& out) : c_(c), out_(out) {}

  void run(bool loto, bool generated, bool calibrate) {
    index_ = store::DatasetIndex::load(c_.index);
    const bool have_generated = !c_.generated_index.empty();
    if ((generated || calibrate) && !have_generated) {
      fail(ErrorKind::protocol, "generated-set protocol requested but store.generated_index is not set");
    }
    if (have_generated && (generated || calibrate)) {
      generated_index_ = store::DatasetIndex::load(c_.generated_index);
    }
    const eval::RunOptions options{c_.threads, c_.held_out};
    const auto gen_seeds = eval::seed_sequence(c_.generated_seed_base, c_.generated_repetitions);
    const std::optional<double> fraction =
        calibrate ? std::optional(c_.validation_fraction) : std::nullopt;

    for (int layer : c_.layers) {
      auto m = load_matrix(c_.matrix_path(c_.activations, layer), layer);
      if (loto) {
        out_ << "training layer " << layer << " (leave-one-topic-out)\n";
        auto r = eval::leave_one_topic_out(index_, m, layer, c_.seeds, c_.train, options);
        emit(std::move(r), {c_.index}, {c_.matrix_path(c_.activations, layer)});
      }
      if (generated || calibrate) {
        if (c_.generated_activations.empty()) {
          fail(ErrorKind::protocol, "store.generated_activations is not set");
        }
        auto g = load_matrix(c_.matrix_path(c_.generated_activations, layer), layer);
        out_ << "training layer " << layer << " (generated set)\n";
        auto reps = eval::eval_generated(index_, m, *generated_index_, g, gen_seeds, c_.train, fraction, options);
        emit_generated(std::move(reps),
                       {c_.matrix_path(c_.activations, layer), c_.matrix_path(c_.generated_activations, layer)});
      }
    }

    if (!c_.embeddings.empty()) {
      auto e = load_matrix(c_.embeddings, 0);
      if (loto) {
        out_ << "training " << c_.embedding_label << " embedding baseline (leave-one-topic-out)\n";
        emit(baseline::embedding_loto(index_, e, c_.seeds, c_.train, options, c_.embedding_label),
             {c_.index}, {c_.embeddings});
      }
      if ((generated || calibrate) && !c_.generated_embeddings.empty()) {
        auto ge = load_matrix(c_.generated_embeddings, 0);
        out_ << "training " << c_.embedding_label << " embedding baseline (generated set)\n";
        emit_generated(baseline::embedding_generated(index_, e, *generated_index_, ge, gen_seeds, c_.train,
                                                     fraction, options, c_.embedding_label),
                       {c_.embeddings, c_.generated_embeddings});
      }
    }

    if (loto) few_shot(c_.few_shot, index_, baseline::Grouping::by_topic, c_.index);
    if (generated && generated_index_) {
      few_shot(c_.generated_few_shot, *generated_index_, baseline::Grouping::whole_set, c_.generated_index);
    }
  }

  const std::vector<eval::EvalReport>& reports() const { return reports_; }

private:
  store::ActivationMatrix load_matrix(const fs::path& path, int layer) {
    auto m = store::read_activation_matrix(path);
    m.source_model = c_.source_model;
    m.layer = layer;
    return m;
  }

  const std::string& checksum(const fs::path& p) {
    auto it = checksums_.find(p.string());
    if (it == checksums_.end()) it = checksums_.emplace(p.string(), sha256_file(p)).first;
    return it->second;
  }

  void add_inputs(eval::EvalReport& r, const std::vector<fs::path>& indexes,
                  const std::vector<fs::path>& matrices) {
    if (!c_.config_path.empty()) r.inputs.push_back({"config", c_.config_path.string(), checksum(c_.config_path)});
    for (const auto& p : indexes) r.inputs.push_back({"index", p.string(), checksum(p)});
    for (const auto& p : matrices) r.inputs.push_back({"matrix", p.string(), checksum(p)});
  }

  void emit(eval::EvalReport r, const std::vector<fs::path>& indexes, const std::vector<fs::path>& matrices) {
    add_inputs(r, indexes, matrices);
    // End-to-end audit: no probe may have seen a row of the topic it is tested on.
    for (const auto& cell : r.cells) {
      for (auto row : cell.train_rows) {
        if (r.protocol == "loto" && index_[row].topic == cell.name) {
          fail(ErrorKind::protocol, "audit: held-out topic '" + cell.name + "' leaked into training");
        }
      }
    }
    const fs::path file = c_.out_dir / (r.model + "-" + r.protocol + ".json");
    write_file_atomic(file, eval::to_json(r).dump(2) + "\n");
    reports_.push_back(std::move(r));
  }

  void emit_generated(eval::GeneratedReports reps, const std::vector<fs::path>& matrices) {
    const std::vector<fs::path> indexes{c_.index, c_.generated_index};
    emit(std::move(reps.plain), indexes, matrices);
    if (reps.calibrated) emit(std::move(*reps.calibrated), indexes, matrices);
  }

  void few_shot(const std::vector<fs::path>& files, const store::DatasetIndex& index,
                baseline::Grouping grouping, const fs::path& index_path) {
    for (const auto& f : files) {
      const auto records = store::read_few_shot(f);
      std::vector<int> shots;
      for (const auto& r : records) {
        if (std::find(shots.begin(), shots.end(), r.shots) == shots.end()) shots.push_back(r.shots);
      }
      std::sort(shots.begin(), shots.end());
      for (int k : shots) {
        auto r = baseline::few_shot_report(index, records, k, grouping);
        if (grouping == baseline::Grouping::by_topic && c_.held_out) {
          std::erase_if(r.cells, [&](const eval::Cell& cell) { return cell.name != *c_.held_out; });
          if (r.cells.empty()) fail(ErrorKind::lookup, "unknown held-out topic '" + *c_.held_out + "'");
          r.finalize_average();
        }
        r.inputs.push_back({"few_shot", f.string(), checksum(f)});
        emit(std::move(r), {index_path}, {});
      }
    }
  }

  const PipelineConfig& c_;
  std::ostream& out_;
  store::DatasetIndex index_;
  std::optional<store::DatasetIndex> generated_index_;
  std::map<std::string, std::string> checksums_;
  std::vector<eval::EvalReport> reports_;
};

void print_reports(const PipelineConfig& c, const std::vector<eval::EvalReport>& reports, std::ostream& out) {
  if (c.format == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(eval::to_json(r));
    out << arr.dump(2) << '\n';
  } else {
    out << eval::render_table(reports);
  }
}

int train_and_report(const PipelineConfig& config, std::ostream& out, std::ostream& err,
                     const std::string& stage, bool loto, bool generated, bool calibrate) {
  if (auto problems = validate_store(config); !problems.empty()) {
    for (const auto& p : problems) out << "violation: " << p << '\n';
    error_line(err, "validate", "validation", std::to_string(problems.size()) + " violation(s)");
    return kValidationFailure;
  }
  return run_stage(stage, err, [&] {
    // Progress lines would corrupt JSON output.
    std::ostream discard(nullptr);
    Runner runner(config, config.format == "json" ? discard : out);
    runner.run(loto, generated, calibrate);
    write_file_atomic(config.out_dir / (stage + "-tables.txt"), eval::render_table(runner.reports()));
    print_reports(config, runner.reports(), out);
    return int{kOk};
  });
}

} // namespace

int cmd_train_eval(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return train_and_report(config, out, err, "train-eval", has_protocol(config, "loto"),
                          has_protocol(config, "generated"), false);
}

int cmd_calibrate(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return train_and_report(config, out, err, "calibrate", false, false, true);
}

int cmd_report(const PipelineConfig& config, const std::vector<fs::path>& files, std::ostream& out,
               std::ostream& err) {
  return run_stage("report", err, [&] {
    std::vector<fs::path> paths = files;
    if (paths.empty()) {
      std::error_code ec;
      if (!fs::is_directory(config.out_dir, ec)) {
        fail(ErrorKind::io, "report directory " + config.out_dir.string() + " does not exist");
      }
      for (const auto& entry : fs::directory_iterator(config.out_dir)) {
        if (entry.path().extension() == ".json") paths.push_back(entry.path());
      }
      std::sort(paths.begin(), paths.end());
    }
    std::vector<eval::EvalReport> reports;
    for (const auto& p : paths) {
      try {
        reports.push_back(eval::report_from_json(nlohmann::ordered_json::parse(read_file(p))));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::schema, p.string() + ": " + e.what());
      }
    }
    print_reports(config, reports, out);
    return int{kOk};
  });
}

} // namespace saplma::pipeline
