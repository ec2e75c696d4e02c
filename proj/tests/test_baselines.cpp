#include "doctest.h"

#include "saplma/baselines.hpp"
#include "saplma/error.hpp"
#include "saplma/rng.hpp"
#include "saplma/synthetic.hpp"

using namespace saplma;
using namespace saplma::baseline;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::parameter;
}

std::vector<RatioScore> as_scores(const std::vector<double>& r) {
  std::vector<RatioScore> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.push_back({"s" + std::to_string(i), r[i]});
  return out;
}

using U8 = std::vector<std::uint8_t>;

} // namespace

TEST_CASE("ratio") {
  CHECK(few_shot_ratio({"a", 0.6, 0.3, 3}).ratio == doctest::Approx(2.0));
  CHECK(few_shot_ratio({"a", 0.25, 0.25, 3}).ratio == 1.0);
  CHECK(kind_of([] { few_shot_ratio({"a", 0.6, 0.0, 3}); }) == ErrorKind::data);
  CHECK(kind_of([] { few_shot_ratio({"a", -0.1, 0.2, 3}); }) == ErrorKind::data);
}

TEST_CASE("classification against the mean ratio") {
  CHECK(few_shot_classify(as_scores({2.0, 0.5})) == U8{1, 0});
  CHECK(few_shot_classify(as_scores({0.1, 0.1, 0.1})) == U8{0, 0, 0});
  CHECK(few_shot_classify(as_scores(std::vector<double>(1000, 0.7))) == U8(1000, 0));
  CHECK(kind_of([] { few_shot_classify({}); }) == ErrorKind::parameter);

  // A skewed set: the mean rule labels one of five true, unlike a median rule.
  const auto skew = few_shot_classify(as_scores({100.0, 1.0, 1.1, 0.9, 1.2}));
  CHECK(skew == U8{1, 0, 0, 0, 0});
}

TEST_CASE("classification is invariant to scaling all ratios") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> r(2 + rng.uniform_index(30));
    for (auto& v : r) v = std::exp(rng.normal());
    const auto base = few_shot_classify(as_scores(r));
    for (double c : {0.25, 8.0, 3.7, 1e-3}) {
      std::vector<double> scaled(r);
      for (auto& v : scaled) v *= c;
      CHECK(few_shot_classify(as_scores(scaled)) == base);
    }
  }
}

TEST_CASE("few-shot reports") {
  std::vector<store::IndexEntry> e{{"a1", "A", true, ""}, {"a2", "A", false, ""}, {"a3", "A", true, ""},
                                   {"b1", "B", true, ""}, {"b2", "B", false, ""}};
  const store::DatasetIndex index(e);
  const std::vector<store::FewShotRecord> recs{
      {"a1", 0.8, 0.2, 3}, {"a2", 0.3, 0.6, 3}, {"a3", 0.5, 0.5, 3}, {"b1", 0.4, 0.1, 3}, {"b2", 0.1, 0.4, 3},
      {"a1", 0.9, 0.1, 5}};
  const auto r = few_shot_report(index, recs, 3, Grouping::by_topic);
  CHECK(r.model == "3-shot");
  CHECK(r.protocol == "loto");
  CHECK(r.baseline);
  REQUIRE(r.cells.size() == 2);
  // Topic A ratios 4, 0.5, 1 (mean 1.833): predictions 1, 0, 0 vs labels 1, 0, 1.
  CHECK(r.cells[0].accuracy_mean == doctest::Approx(2.0 / 3.0));
  CHECK(r.cells[0].threshold_mean == doctest::Approx(5.5 / 3.0));
  CHECK(r.cells[1].accuracy_mean == 1.0);
  CHECK(r.cells[0].seeds == std::vector<std::uint64_t>{0});

  const auto whole = few_shot_report(index, recs, 3, Grouping::whole_set, "generated");
  CHECK(whole.protocol == "generated");
  REQUIRE(whole.cells.size() == 1);
  CHECK(whole.cells[0].n_test == 5);

  CHECK(kind_of([&] { few_shot_report(index, recs, 4, Grouping::by_topic); }) == ErrorKind::data);
  CHECK(kind_of([&] { few_shot_report(index, {{"zz", 0.5, 0.5, 3}}, 3, Grouping::by_topic); }) ==
        ErrorKind::validation);
}

TEST_CASE("embedding baseline reuses the probe with any width") {
  const auto index = synthetic::make_index({"a", "b"}, 40, 1);
  synthetic::Spec spec;
  spec.dim = 768;
  const auto m = synthetic::make_matrix(index, spec);
  probe::TrainConfig cfg;
  cfg.epochs = 2;
  const auto r = embedding_loto(index, m, {0}, cfg);
  CHECK(r.model == "bert");
  CHECK(r.baseline);
  CHECK_FALSE(r.layer);
  CHECK(r.cells.size() == 2);

  const auto direct = eval::leave_one_topic_out(index, m, 0, {0}, cfg);
  CHECK(direct.cells[0].accuracies == r.cells[0].accuracies);
  CHECK(direct.config == r.config);
}
