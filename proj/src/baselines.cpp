#include "saplma/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "saplma/error.hpp"

namespace saplma::baseline {

RatioScore few_shot_ratio(const store::FewShotRecord& record) {
  if (!(record.p_true > 0.0) || !(record.p_false > 0.0) || !std::isfinite(record.p_true) ||
      !std::isfinite(record.p_false)) {
    fail(ErrorKind::data, "few-shot record " + record.id + ": probabilities must be positive");
  }
  const double ratio = record.p_true / record.p_false;
  if (!std::isfinite(ratio) || !(ratio > 0.0)) {
    fail(ErrorKind::data, "few-shot record " + record.id + ": ratio is not a positive finite number");
  }
  return {record.id, ratio};
}

std::vector<std::uint8_t> few_shot_classify(std::span<const RatioScore> ratios) {
  if (ratios.empty()) {
    fail(ErrorKind::parameter, "few_shot_classify: no ratios");
  }
  // Extended precision keeps the mean of equal ratios equal to them, so the
  // strict rule predicts false for all of them.
  long double sum = 0.0L;
  for (const auto& r : ratios) sum += r.ratio;
  const long double mean = sum / static_cast<long double>(ratios.size());
  std::vector<std::uint8_t> out;
  out.reserve(ratios.size());
  for (const auto& r : ratios) out.push_back(static_cast<long double>(r.ratio) > mean ? 1 : 0);
  return out;
}

eval::EvalReport few_shot_report(const store::DatasetIndex& index,
                                 const std::vector<store::FewShotRecord>& records, int shots,
                                 Grouping grouping, const std::string& set_name) {
  if (auto problems = store::validate_few_shot(index, records); !problems.empty()) {
    fail(ErrorKind::validation, problems.front());
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<RatioScore>> groups;
  std::map<std::string, std::vector<std::uint8_t>> labels;
  for (const auto& rec : records) {
    if (rec.shots != shots) continue;
    const auto& entry = index[*index.find(rec.id)];
    const std::string key = grouping == Grouping::by_topic ? entry.topic : set_name;
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(few_shot_ratio(rec));
    labels[key].push_back(entry.label ? 1 : 0);
  }
  if (order.empty()) {
    fail(ErrorKind::data, "no few-shot records with shots=" + std::to_string(shots));
  }

  eval::EvalReport report;
  report.model = std::to_string(shots) + "-shot";
  report.protocol = grouping == Grouping::by_topic ? "loto" : "generated";
  report.baseline = true;
  report.repetitions = 1;
  report.config = {{"scorer", "p_true/p_false > mean ratio of the evaluated group"},
                   {"shots", shots}};
  report.notes.push_back("deterministic scoring; seed unused. Cutoff = arithmetic mean of the ratios "
                         "of the statements being evaluated (per topic or per set), threshold field "
                         "holds that mean.");
  for (const auto& key : order) {
    const auto& ratios = groups[key];
    const auto& y = labels[key];
    const auto pred = few_shot_classify(ratios);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += static_cast<std::size_t>(pred[i] == y[i]);
    std::vector<double> scores;
    for (const auto& r : ratios) scores.push_back(r.ratio);

    eval::Cell cell;
    cell.name = key;
    cell.seeds = {0};
    cell.accuracies = {static_cast<double>(hits) / static_cast<double>(pred.size())};
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    cell.aucs = {pos > 0 && pos < y.size() ? std::optional(eval::roc_auc(scores, y)) : std::nullopt};
    cell.thresholds = {std::accumulate(scores.begin(), scores.end(), 0.0) /
                       static_cast<double>(scores.size())};
    cell.n_test = pred.size();
    cell.finalize_means();
    report.cells.push_back(std::move(cell));
  }
  report.finalize_average();
  report.validate();
  return report;
}

namespace {

void tag(eval::EvalReport& r, const std::string& label) {
  r.model = label;
  r.baseline = true;
  r.layer.reset();
  r.notes.push_back("baseline: probe architecture and training config identical to the "
                    "activation probe; only the input matrix differs");
}

} // namespace

eval::EvalReport embedding_loto(const store::DatasetIndex& index,
                                const store::ActivationMatrix& embeddings,
                                const std::vector<std::uint64_t>& seeds,
                                const probe::TrainConfig& config, eval::RunOptions options,
                                const std::string& label) {
  auto r = eval::leave_one_topic_out(index, embeddings, 0, seeds, config, options);
  tag(r, label);
  return r;
}

eval::GeneratedReports embedding_generated(const store::DatasetIndex& train_index,
                                           const store::ActivationMatrix& train_embeddings,
                                           const store::DatasetIndex& generated_index,
                                           const store::ActivationMatrix& generated_embeddings,
                                           const std::vector<std::uint64_t>& seeds,
                                           const probe::TrainConfig& config,
                                           std::optional<double> calibration_fraction,
                                           eval::RunOptions options, const std::string& label) {
  auto out = eval::eval_generated(train_index, train_embeddings, generated_index, generated_embeddings,
                                  seeds, config, calibration_fraction, options);
  tag(out.plain, label);
  if (out.calibrated) tag(*out.calibrated, label);
  return out;
}

} // namespace saplma::baseline
