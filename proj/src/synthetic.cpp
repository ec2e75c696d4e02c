#include "saplma/synthetic.hpp"

#include <cmath>
#include <algorithm>

#include "saplma/error.hpp"
#include "saplma/rng.hpp"

namespace saplma::synthetic {

store::ActivationMatrix make_matrix(const store::DatasetIndex& index, const Spec& spec) {
  const auto topics = index.topics();
  if (spec.dim <= kOffsetStart) {
    fail(ErrorKind::parameter, "synthetic dim must exceed " + std::to_string(kOffsetStart));
  }
  if (spec.kind == SignalKind::orthogonal && kSharedAxisDims + topics.size() > kOffsetStart) {
    fail(ErrorKind::parameter, "too many topics for orthogonal signal axes");
  }
  Rng rng(spec.seed);
  std::vector<std::vector<double>> offsets;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    std::vector<double> off(spec.dim, 0.0);
    for (std::uint32_t d = kOffsetStart; d < spec.dim; ++d) off[d] = spec.topic_offset * rng.normal();
    offsets.push_back(std::move(off));
  }
  const double shared = 1.0 / std::sqrt(static_cast<double>(kSharedAxisDims));

  store::ActivationMatrix m(spec.dim, index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& e = index[i];
    const std::size_t t = static_cast<std::size_t>(
        std::find(topics.begin(), topics.end(), e.topic) - topics.begin());
    const double sign = e.label ? 1.0 : -1.0;
    auto row = m.row(i);
    for (std::uint32_t d = 0; d < spec.dim; ++d) {
      double v = rng.normal() + offsets[t][d];
      if (spec.kind == SignalKind::shared) {
        if (d < kSharedAxisDims) v += sign * spec.signal * shared;
      } else if (d == kSharedAxisDims + t) {
        v += sign * spec.signal;
      }
      row[d] = static_cast<float>(v);
    }
  }
  return m;
}

store::DatasetIndex make_index(const std::vector<std::string>& topics, std::size_t rows_per_topic,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<store::IndexEntry> entries;
  for (const auto& topic : topics) {
    for (std::size_t r = 0; r < rows_per_topic; ++r) {
      store::IndexEntry e;
      e.topic = topic;
      e.label = rng.uniform_index(2) == 1;
      e.text = topic + " statement " + std::to_string(r);
      e.id = forge::statement_id(e.topic, e.text);
      entries.push_back(std::move(e));
    }
  }
  return store::DatasetIndex(std::move(entries));
}

SignalKind parse_kind(const std::string& name) {
  if (name == "shared") return SignalKind::shared;
  if (name == "orthogonal") return SignalKind::orthogonal;
  fail(ErrorKind::parameter, "unknown signal kind '" + name + "'");
}

} // namespace saplma::synthetic
