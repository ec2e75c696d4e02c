#include "saplma/eval_harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_set>

#include "saplma/error.hpp"
#include "saplma/hash.hpp"
#include "saplma/kernels.hpp"
#include "saplma/rng.hpp"

namespace saplma::eval {

std::vector<std::uint8_t> to_labels(const std::vector<bool>& flags) {
  return {flags.begin(), flags.end()};
}

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(ErrorKind::parameter, std::string(what) + ": length mismatch (" + std::to_string(a) +
                                   " vs " + std::to_string(b) + ")");
  }
  if (a == 0) {
    fail(ErrorKind::parameter, std::string(what) + ": empty input");
  }
}

std::pair<std::size_t, std::size_t> class_counts(Labels labels) {
  const auto pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                          [](auto y) { return y != 0; }));
  return {pos, labels.size() - pos};
}

} // namespace

double accuracy(std::span<const double> scores, Labels labels, double threshold) {
  check_pair(scores.size(), labels.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    hits += static_cast<std::size_t>((scores[i] > threshold) == (labels[i] != 0));
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double roc_auc(std::span<const double> scores, Labels labels) {
  check_pair(scores.size(), labels.size(), "roc_auc");
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::undefined_metric, "AUC undefined: only one class present");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the mid-rank keeps the rank sum integral.
  std::uint64_t pos_rank_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank_x2 = (i + 1) + j; // ranks i+1..j averaged, doubled
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) pos_rank_x2 += rank_x2;
    }
    i = j;
  }
  const double u = static_cast<double>(pos_rank_x2) / 2.0 -
                   static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

RocCurve roc_curve(std::span<const double> scores, Labels labels) {
  check_pair(scores.size(), labels.size(), "roc_curve");
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::undefined_metric, "ROC undefined: only one class present");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return curve;
}

double RocCurve::area() const {
  double a = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    a += (points[i].false_positive_rate - points[i - 1].false_positive_rate) *
         (points[i].true_positive_rate + points[i - 1].true_positive_rate) / 2.0;
  }
  return a;
}

double observed_agreement(Labels a, Labels b) {
  check_pair(a.size(), b.size(), "observed_agreement");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same += static_cast<std::size_t>((a[i] != 0) == (b[i] != 0));
  }
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double cohens_kappa(Labels a, Labels b) {
  const double p_o = observed_agreement(a, b);
  const double n = static_cast<double>(a.size());
  const double a1 = static_cast<double>(class_counts(a).first) / n;
  const double b1 = static_cast<double>(class_counts(b).first) / n;
  const double p_e = a1 * b1 + (1.0 - a1) * (1.0 - b1);
  if (p_e == 1.0) {
    return 1.0;
  }
  return (p_o - p_e) / (1.0 - p_e);
}

Calibration calibrate_threshold(std::span<const double> scores, Labels labels) {
  check_pair(scores.size(), labels.size(), "calibrate_threshold");
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::calibration, "calibration needs both classes in the validation set");
  }
  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  candidates.reserve(distinct.size() + 1);
  candidates.push_back(std::nextafter(distinct.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    double mid = distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0;
    if (!(mid < distinct[i + 1])) mid = distinct[i];
    candidates.push_back(mid);
  }
  candidates.push_back(std::nextafter(distinct.back(), std::numeric_limits<double>::infinity()));

  Calibration best{candidates.front(), -1.0};
  for (double t : candidates) {
    const double acc = accuracy(scores, labels, t);
    if (acc > best.accuracy) {
      best = {t, acc};
    }
  }
  return best;
}

ValidationSplit split_validation(Labels labels, double fraction, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 10) {
    fail(ErrorKind::parameter, "validation split needs at least 10 items, got " + std::to_string(n));
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    fail(ErrorKind::parameter, "validation fraction must lie in (0,1)");
  }
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    by_class[labels[i] != 0 ? 1 : 0].push_back(i);
  }
  // Largest-remainder apportionment of the target across classes.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = static_cast<double>(target) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < target) {
    const int c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
    ++assigned;
  }

  Rng rng(seed);
  ValidationSplit split;
  for (int c = 0; c < 2; ++c) {
    auto rows = by_class[c];
    rng.shuffle(std::span<std::size_t>(rows));
    split.validation.insert(split.validation.end(), rows.begin(),
                            rows.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(split.validation.begin(), split.validation.end());
  std::size_t v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (v < split.validation.size() && split.validation[v] == i) {
      ++v;
    } else {
      split.test.push_back(i);
    }
  }
  return split;
}

// ---------------------------------------------------------------- helpers

std::vector<std::uint64_t> seed_sequence(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), base);
  return seeds;
}

std::string ids_digest(const store::DatasetIndex& index, std::span<const std::size_t> rows) {
  std::string joined;
  for (auto r : rows) {
    joined += index[r].id;
    joined.push_back('\n');
  }
  return sha256_hex(joined).substr(0, 16);
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<std::uint8_t> labels_of(const store::DatasetIndex& index, std::span<const std::size_t> rows) {
  std::vector<std::uint8_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(index[r].label ? 1 : 0);
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::vector<std::string> topics_of(const store::DatasetIndex& index, std::span<const std::size_t> rows) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto r : rows) {
    if (seen.insert(index[r].topic).second) out.push_back(index[r].topic);
  }
  return out;
}

probe::ProbeModel train_on(const store::ActivationMatrix& matrix, std::span<const std::size_t> rows,
                           std::span<const std::uint8_t> labels, probe::TrainConfig config,
                           std::uint64_t seed) {
  config.seed = seed;
  const probe::TrainingSet set{matrix.data, matrix.dim, rows, labels};
  return probe::train_probe(set, config);
}

EvalReport report_shell(const std::string& protocol, const store::ActivationMatrix& matrix,
                        std::optional<int> layer, std::size_t repetitions,
                        const probe::TrainConfig& config) {
  EvalReport r;
  r.protocol = protocol;
  r.layer = layer;
  r.model = layer ? "layer-" + std::to_string(*layer) : matrix.source_model;
  r.source_model = matrix.source_model;
  r.repetitions = repetitions;
  r.config = probe::to_json(config);
  r.config.erase("seed");
  r.config_fingerprint = probe::fingerprint(config);
  r.kernel_isa = std::string(kernels::to_string(kernels::active().isa));
  return r;
}

} // namespace

void Cell::finalize_means() {
  const double n = static_cast<double>(accuracies.size());
  accuracy_mean = n > 0 ? std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / n : 0.0;
  threshold_mean =
      thresholds.empty() ? 0.5 : std::accumulate(thresholds.begin(), thresholds.end(), 0.0) /
                                     static_cast<double>(thresholds.size());
  auc_mean.reset();
  if (!aucs.empty() && std::all_of(aucs.begin(), aucs.end(), [](const auto& a) { return a.has_value(); })) {
    double s = 0.0;
    for (const auto& a : aucs) s += *a;
    auc_mean = s / static_cast<double>(aucs.size());
  }
}

// ---------------------------------------------------------------- LOTO

EvalReport leave_one_topic_out(const store::DatasetIndex& index, const store::ActivationMatrix& matrix,
                               int layer, const std::vector<std::uint64_t>& seeds,
                               const probe::TrainConfig& config, RunOptions options) {
  config.validate();
  store::check_binding(index, matrix);
  auto topics = index.topics();
  if (topics.size() < 2) {
    fail(ErrorKind::protocol, "leave-one-topic-out needs at least two topics, index has " +
                                  std::to_string(topics.size()));
  }
  if (options.held_out) {
    if (std::find(topics.begin(), topics.end(), *options.held_out) == topics.end()) {
      fail(ErrorKind::lookup, "held-out topic '" + *options.held_out + "' not in index");
    }
    topics = {*options.held_out};
  }
  if (seeds.empty()) {
    fail(ErrorKind::protocol, "leave-one-topic-out needs at least one seed");
  }

  EvalReport report = report_shell("loto", matrix, layer, seeds.size(), config);
  report.cells.resize(topics.size());
  std::vector<store::Split> splits;
  std::vector<std::vector<std::uint8_t>> train_labels, test_labels;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    splits.push_back(store::split_by_topic(index, topics[t]));
    train_labels.push_back(labels_of(index, splits[t].train));
    test_labels.push_back(labels_of(index, splits[t].test));
    auto& cell = report.cells[t];
    cell.name = topics[t];
    cell.seeds = seeds;
    cell.accuracies.assign(seeds.size(), 0.0);
    cell.aucs.assign(seeds.size(), std::nullopt);
    cell.thresholds.assign(seeds.size(), 0.5);
    cell.n_train = splits[t].train.size();
    cell.n_test = splits[t].test.size();
    cell.train_topics = topics_of(index, splits[t].train);
    cell.train_ids_digest = ids_digest(index, splits[t].train);
    cell.config_fingerprint = report.config_fingerprint;
    cell.train_rows = splits[t].train;
  }

  parallel_for(topics.size() * seeds.size(), options.threads, [&](std::size_t job) {
    const std::size_t t = job / seeds.size();
    const std::size_t s = job % seeds.size();
    const auto model = train_on(matrix, splits[t].train, train_labels[t], config, seeds[s]);
    const auto scores = probe::predict(model, matrix.data, matrix.dim, splits[t].test);
    auto& cell = report.cells[t];
    cell.accuracies[s] = accuracy(scores, test_labels[t], 0.5);
    const auto [pos, neg] = class_counts(test_labels[t]);
    if (pos > 0 && neg > 0) cell.aucs[s] = roc_auc(scores, test_labels[t]);
  });

  for (auto& cell : report.cells) {
    cell.finalize_means();
    if (!cell.auc_mean) {
      report.notes.push_back("AUC undefined for topic '" + cell.name + "': single-class test set");
    }
  }
  report.finalize_average();
  report.validate();
  return report;
}

// ---------------------------------------------------------------- generated

GeneratedReports eval_generated(const store::DatasetIndex& train_index,
                                const store::ActivationMatrix& train_matrix,
                                const store::DatasetIndex& generated_index,
                                const store::ActivationMatrix& generated_matrix,
                                const std::vector<std::uint64_t>& seeds,
                                const probe::TrainConfig& config,
                                std::optional<double> calibration_fraction, RunOptions options) {
  config.validate();
  store::check_binding(train_index, train_matrix);
  store::check_binding(generated_index, generated_matrix);
  if (seeds.empty()) {
    fail(ErrorKind::protocol, "generated-set evaluation needs at least one seed");
  }
  if (train_matrix.dim != generated_matrix.dim) {
    fail(ErrorKind::protocol, "training dim " + std::to_string(train_matrix.dim) +
                                  " != generated dim " + std::to_string(generated_matrix.dim));
  }
  for (const auto& e : generated_index.entries()) {
    if (train_index.find(e.id)) {
      fail(ErrorKind::protocol, "statement " + e.id + " appears in both the training and the generated set");
    }
  }
  const auto train_topics = train_index.topics();
  for (const auto& topic : generated_index.topics()) {
    if (std::find(train_topics.begin(), train_topics.end(), topic) != train_topics.end()) {
      fail(ErrorKind::protocol, "generated set shares topic '" + topic + "' with the training set");
    }
  }

  const auto train_rows = all_rows(train_index.size());
  const auto train_labels = labels_of(train_index, train_rows);
  const auto test_rows = all_rows(generated_index.size());
  const auto test_labels = labels_of(generated_index, test_rows);
  const auto [pos, neg] = class_counts(test_labels);

  auto make_cell = [&](const EvalReport& r) {
    Cell c;
    c.name = "generated";
    c.seeds = seeds;
    c.accuracies.assign(seeds.size(), 0.0);
    c.aucs.assign(seeds.size(), std::nullopt);
    c.thresholds.assign(seeds.size(), 0.5);
    c.n_train = train_rows.size();
    c.train_topics = train_topics;
    c.train_ids_digest = ids_digest(train_index, train_rows);
    c.config_fingerprint = r.config_fingerprint;
    c.train_rows = train_rows;
    return c;
  };

  GeneratedReports out;
  out.plain = report_shell("generated", train_matrix, train_matrix.layer ? std::optional(train_matrix.layer) : std::nullopt,
                           seeds.size(), config);
  out.plain.cells.push_back(make_cell(out.plain));
  out.plain.cells[0].n_test = test_rows.size();
  if (calibration_fraction) {
    out.calibrated = report_shell("calibrated", train_matrix, out.plain.layer, seeds.size(), config);
    out.calibrated->cells.push_back(make_cell(*out.calibrated));
    out.calibrated->cells[0].n_test =
        split_validation(test_labels, *calibration_fraction, seeds[0]).test.size();
    out.calibrated->notes.push_back("threshold chosen on a stratified " +
                                    std::to_string(*calibration_fraction) +
                                    " validation split of the generated set, seeded per repetition");
  }

  parallel_for(seeds.size(), options.threads, [&](std::size_t s) {
    const auto model = train_on(train_matrix, train_rows, train_labels, config, seeds[s]);
    const auto scores = probe::predict(model, generated_matrix.data, generated_matrix.dim, test_rows);
    auto& cell = out.plain.cells[0];
    cell.accuracies[s] = accuracy(scores, test_labels, 0.5);
    if (pos > 0 && neg > 0) cell.aucs[s] = roc_auc(scores, test_labels);

    if (out.calibrated) {
      const auto split = split_validation(test_labels, *calibration_fraction, seeds[s]);
      std::vector<double> val_scores, test_scores;
      std::vector<std::uint8_t> val_labels, held_labels;
      for (auto i : split.validation) {
        val_scores.push_back(scores[i]);
        val_labels.push_back(test_labels[i]);
      }
      for (auto i : split.test) {
        test_scores.push_back(scores[i]);
        held_labels.push_back(test_labels[i]);
      }
      const auto cal = calibrate_threshold(val_scores, val_labels);
      auto& ccell = out.calibrated->cells[0];
      ccell.thresholds[s] = cal.threshold;
      ccell.accuracies[s] = accuracy(test_scores, held_labels, cal.threshold);
      const auto [tp, tn] = class_counts(held_labels);
      if (tp > 0 && tn > 0) ccell.aucs[s] = roc_auc(test_scores, held_labels);
    }
  });

  for (EvalReport* r : {&out.plain, out.calibrated ? &*out.calibrated : nullptr}) {
    if (!r) continue;
    r->cells[0].finalize_means();
    r->finalize_average();
    r->validate();
  }
  return out;
}

} // namespace saplma::eval
