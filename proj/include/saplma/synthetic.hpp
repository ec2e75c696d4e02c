#pragma once

// Synthetic activation matrices with a known answer, for exercising the
// probe and evaluation harness without a language model.
//
// Row for a statement with label y in topic t:
//   x = noise + (2y - 1) * signal * axis(t) + offset(t)
// noise ~ N(0, 1) per coordinate. With SignalKind::shared every topic uses the
// same unit axis spread over dims [0, 10); with SignalKind::orthogonal topic t
// uses the basis vector e_{10+t}, so the signal learned on one topic says
// nothing about another. offset(t) is a per-topic random shift in dims
// [kOffsetStart, dim).

#include <cstdint>
#include <string>
#include <vector>

#include "saplma/activation_store.hpp"

namespace saplma::synthetic {

enum class SignalKind { shared, orthogonal };

inline constexpr std::uint32_t kSharedAxisDims = 10;
inline constexpr std::uint32_t kOffsetStart = 32;

struct Spec {
  std::uint32_t dim = 64;
  SignalKind kind = SignalKind::shared;
  double signal = 3.0;
  double topic_offset = 1.0;
  std::uint64_t seed = 0;
};

// Throws Error{parameter} when dim is too small for the construction or the
// orthogonal kind has more topics than free axes.
store::ActivationMatrix make_matrix(const store::DatasetIndex& index, const Spec& spec);

// Index of `rows_per_topic` statements per topic with labels drawn by a fair
// coin; ids and texts are synthetic.
store::DatasetIndex make_index(const std::vector<std::string>& topics, std::size_t rows_per_topic,
                               std::uint64_t seed);

SignalKind parse_kind(const std::string& name);

} // namespace saplma::synthetic
