#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include "saplma/error.hpp"
#include "saplma/eval_harness.hpp"

namespace saplma::eval {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string fixed4(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string render_grid(const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += " | ";
      out += pad(cells[c], width[c], c > 0);
    }
    return out + "\n";
  };
  std::string out = line(header);
  std::string rule;
  for (std::size_t c = 0; c < width.size(); ++c) {
    if (c) rule += "-+-";
    rule += std::string(width[c], '-');
  }
  out += rule + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

} // namespace

void EvalReport::finalize_average() {
  average_accuracy.reset();
  average_auc.reset();
  if (cells.empty()) return;
  double acc = 0.0;
  for (const auto& c : cells) acc += c.accuracy_mean;
  average_accuracy = acc / static_cast<double>(cells.size());
  if (std::all_of(cells.begin(), cells.end(), [](const Cell& c) { return c.auc_mean.has_value(); })) {
    double auc = 0.0;
    for (const auto& c : cells) auc += *c.auc_mean;
    average_auc = auc / static_cast<double>(cells.size());
  }
}

void EvalReport::validate() const {
  auto bad = [&](const std::string& what) {
    fail(ErrorKind::validation, "report '" + model + "/" + protocol + "': " + what);
  };
  for (const auto& c : cells) {
    if (c.seeds.size() != repetitions) bad("cell '" + c.name + "' seed list length != repetitions");
    if (c.accuracies.size() != repetitions || c.aucs.size() != repetitions) {
      bad("cell '" + c.name + "' has the wrong number of per-seed results");
    }
    for (double a : c.accuracies) {
      if (!in_unit(a)) bad("accuracy outside [0,1] in cell '" + c.name + "'");
    }
    for (const auto& a : c.aucs) {
      if (a && !in_unit(*a)) bad("AUC outside [0,1] in cell '" + c.name + "'");
    }
    if (!in_unit(c.accuracy_mean) || (c.auc_mean && !in_unit(*c.auc_mean))) {
      bad("mean outside [0,1] in cell '" + c.name + "'");
    }
  }
  if (average_accuracy && !in_unit(*average_accuracy)) bad("average accuracy outside [0,1]");
  if (average_auc && !in_unit(*average_auc)) bad("average AUC outside [0,1]");
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["protocol"] = r.protocol;
  j["baseline"] = r.baseline;
  j["layer"] = r.layer ? nlohmann::ordered_json(*r.layer) : nlohmann::ordered_json(nullptr);
  j["source_model"] = r.source_model;
  j["repetitions"] = r.repetitions;
  j["config"] = r.config;
  j["config_fingerprint"] = r.config_fingerprint;
  j["kernel_isa"] = r.kernel_isa;
  auto& inputs = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& f : r.inputs) {
    inputs.push_back({{"role", f.role}, {"path", f.path}, {"sha256", f.sha256}});
  }
  auto& cells = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["seeds"] = c.seeds;
    cj["accuracy"] = c.accuracy_mean;
    cj["auc"] = opt(c.auc_mean);
    cj["threshold"] = c.threshold_mean;
    cj["accuracies"] = c.accuracies;
    auto& aucs = cj["aucs"] = nlohmann::ordered_json::array();
    for (const auto& a : c.aucs) aucs.push_back(opt(a));
    cj["thresholds"] = c.thresholds;
    cj["n_train"] = c.n_train;
    cj["n_test"] = c.n_test;
    cj["train_topics"] = c.train_topics;
    cj["train_ids_digest"] = c.train_ids_digest;
    cj["config_fingerprint"] = c.config_fingerprint;
    cells.push_back(std::move(cj));
  }
  j["average"] = {{"accuracy", opt(r.average_accuracy)}, {"auc", opt(r.average_auc)}};
  j["notes"] = r.notes;
  return j;
}

EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.protocol = j.at("protocol").get<std::string>();
    r.baseline = j.value("baseline", false);
    if (j.contains("layer") && !j["layer"].is_null()) r.layer = j["layer"].get<int>();
    r.source_model = j.value("source_model", "");
    r.repetitions = j.at("repetitions").get<std::size_t>();
    if (j.contains("config")) r.config = j["config"];
    r.config_fingerprint = j.value("config_fingerprint", "");
    r.kernel_isa = j.value("kernel_isa", "");
    for (const auto& f : j.value("inputs", nlohmann::ordered_json::array())) {
      r.inputs.push_back({f.at("role").get<std::string>(), f.at("path").get<std::string>(),
                          f.at("sha256").get<std::string>()});
    }
    for (const auto& cj : j.at("cells")) {
      Cell c;
      c.name = cj.at("name").get<std::string>();
      c.seeds = cj.at("seeds").get<std::vector<std::uint64_t>>();
      c.accuracy_mean = cj.at("accuracy").get<double>();
      c.auc_mean = opt_from(cj.at("auc"));
      c.threshold_mean = cj.value("threshold", 0.5);
      c.accuracies = cj.at("accuracies").get<std::vector<double>>();
      for (const auto& a : cj.at("aucs")) c.aucs.push_back(opt_from(a));
      c.thresholds = cj.value("thresholds", std::vector<double>{});
      c.n_train = cj.value("n_train", std::size_t{0});
      c.n_test = cj.value("n_test", std::size_t{0});
      c.train_topics = cj.value("train_topics", std::vector<std::string>{});
      c.train_ids_digest = cj.value("train_ids_digest", "");
      c.config_fingerprint = cj.value("config_fingerprint", "");
      r.cells.push_back(std::move(c));
    }
    if (j.contains("average")) {
      r.average_accuracy = opt_from(j["average"].at("accuracy"));
      r.average_auc = opt_from(j["average"].at("auc"));
    }
    r.notes = j.value("notes", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("report: ") + e.what());
  }
  r.validate();
  return r;
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::string out;
  // Topic-by-model accuracy grid.
  std::vector<const EvalReport*> loto;
  std::vector<std::string> topics;
  for (const auto& r : reports) {
    if (r.protocol != "loto") continue;
    loto.push_back(&r);
    for (const auto& c : r.cells) {
      if (std::find(topics.begin(), topics.end(), c.name) == topics.end()) topics.push_back(c.name);
    }
  }
  if (!loto.empty()) {
    std::vector<std::string> header{"Model"};
    header.insert(header.end(), topics.begin(), topics.end());
    header.push_back("Average");
    std::vector<std::vector<std::string>> rows;
    for (const auto* r : loto) {
      std::vector<std::string> row{r->model};
      for (const auto& t : topics) {
        auto it = std::find_if(r->cells.begin(), r->cells.end(), [&](const Cell& c) { return c.name == t; });
        row.push_back(it == r->cells.end() ? "-" : fixed4(it->accuracy_mean));
      }
      row.push_back(fixed4(r->average_accuracy));
      rows.push_back(std::move(row));
    }
    out += "Leave-one-topic-out accuracy\n" + render_grid(header, rows);
  }

  std::vector<std::vector<std::string>> gen_rows, cal_rows;
  for (const auto& r : reports) {
    if (r.cells.empty()) continue;
    const auto& c = r.cells.front();
    if (r.protocol == "generated") {
      gen_rows.push_back({r.model, fixed4(c.accuracy_mean), fixed4(c.auc_mean)});
    } else if (r.protocol == "calibrated") {
      cal_rows.push_back({r.model, fixed4(c.threshold_mean), fixed4(c.accuracy_mean)});
    }
  }
  if (!gen_rows.empty()) {
    if (!out.empty()) out += "\n";
    out += "Generated statements\n" + render_grid({"Model", "Accuracy", "AUC"}, gen_rows);
  }
  if (!cal_rows.empty()) {
    if (!out.empty()) out += "\n";
    out += "Generated statements, calibrated threshold\n" +
           render_grid({"Model", "Avg Threshold", "Accuracy"}, cal_rows);
  }
  return out;
}

} // namespace saplma::eval
