#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "saplma/probe_net.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("saplma-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline fs::path data_dir() { return fs::path(SAPLMA_SOURCE_DIR) / "data"; }

// P(s+ > s-) + P(s+ == s-)/2 by counting every positive/negative pair.
inline double pair_count_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline double accuracy_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double t) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] > t) == (labels[i] != 0);
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

// Best accuracy over every threshold that induces a distinct partition: each
// score itself (that score predicted false) and the value just below it (that
// score predicted true).
inline double brute_force_best_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  double best = 0.0;
  for (double s : scores) {
    best = std::max(best, accuracy_at(scores, labels, s));
    best = std::max(best, accuracy_at(scores, labels, std::nextafter(s, -std::numeric_limits<double>::infinity())));
  }
  return best;
}

// Kappa from the explicit 2x2 contingency table.
inline double contingency_kappa(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++n11;
    else if (a[i]) ++n10;
    else if (b[i]) ++n01;
    else ++n00;
  }
  const double n = n11 + n10 + n01 + n00;
  const double po = (n11 + n00) / n;
  const double pe = ((n11 + n10) / n) * ((n11 + n01) / n) + ((n00 + n01) / n) * ((n00 + n10) / n);
  return (po - pe) / (1.0 - pe);
}

// ---------------------------------------------------------------------------
// Long-double probe reference and a central-difference gradient.

using LD = long double;

struct RefActivations {
  std::vector<std::vector<LD>> z; // pre-activations per layer
  std::vector<std::vector<LD>> a; // post-activations; a[k] = relu(z[k]) for hidden k
};

inline RefActivations ref_forward(const saplma::probe::ProbeModel& m, std::span<const double> x) {
  RefActivations r;
  std::vector<LD> prev(x.begin(), x.end());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& L = m.layers[k];
    std::vector<LD> z(L.fan_out);
    for (std::size_t o = 0; o < L.fan_out; ++o) {
      LD s = L.bias[o];
      for (std::size_t i = 0; i < L.fan_in; ++i) s += static_cast<LD>(L.weights[o * L.fan_in + i]) * prev[i];
      z[o] = s;
    }
    std::vector<LD> a = z;
    if (k + 1 < m.layers.size()) {
      for (auto& v : a) v = v > 0 ? v : 0;
    }
    r.z.push_back(z);
    r.a.push_back(a);
    prev = std::move(a);
  }
  return r;
}

inline LD ref_bce(LD z_out, bool label) {
  LD p = 1.0L / (1.0L + std::exp(-z_out));
  const LD lo = static_cast<LD>(saplma::probe::kProbClamp);
  p = std::clamp(p, lo, 1.0L - lo);
  return label ? -std::log(p) : -std::log(1.0L - p);
}

struct NumericGradient {
  std::vector<std::vector<LD>> weights; // per layer, fan_out x fan_in
  std::vector<std::vector<LD>> bias;
  std::size_t kinks = 0;                // parameters whose +-h runs crossed a ReLU kink
  std::vector<std::vector<std::uint8_t>> weight_kink;
  std::vector<std::vector<std::uint8_t>> bias_kink;
};

// Central differences of the mean clamped BCE over a batch, one parameter at
// a time. Perturbing a parameter of layer k shifts one pre-activation z_k[o]
// linearly, so only layers k..end are recomputed, starting from that shift.
inline NumericGradient central_difference(const saplma::probe::ProbeModel& m,
                                          std::span<const double> features,
                                          std::span<const std::uint8_t> labels, LD h) {
  const std::size_t n = labels.size();
  const std::size_t in = m.input_dim();
  const std::size_t depth = m.layers.size();
  std::vector<RefActivations> base;
  for (std::size_t b = 0; b < n; ++b) base.push_back(ref_forward(m, features.subspan(b * in, in)));

  // Loss for sample b after z_k[o] moves by delta; sets kink if any ReLU
  // pre-activation changes side.
  auto shifted_loss = [&](std::size_t b, std::size_t k, std::size_t o, LD delta, bool& kink) -> LD {
    const auto& r = base[b];
    if (k + 1 == depth) return ref_bce(r.z[k][o] + delta, labels[b]);
    const LD zk = r.z[k][o] + delta;
    if ((zk > 0) != (r.z[k][o] > 0)) kink = true;
    const LD da = (zk > 0 ? zk : 0) - r.a[k][o];
    if (da == 0) return ref_bce(r.z[depth - 1][0], labels[b]);
    const auto& next = m.layers[k + 1];
    std::vector<LD> z(r.z[k + 1]);
    for (std::size_t u = 0; u < next.fan_out; ++u) z[u] += static_cast<LD>(next.weights[u * next.fan_in + o]) * da;
    for (std::size_t j = k + 1; j < depth; ++j) {
      if (j + 1 == depth) return ref_bce(z[0], labels[b]);
      std::vector<LD> a(z.size());
      for (std::size_t u = 0; u < z.size(); ++u) {
        if ((z[u] > 0) != (r.z[j][u] > 0)) kink = true;
        a[u] = z[u] > 0 ? z[u] : 0;
      }
      const auto& L = m.layers[j + 1];
      std::vector<LD> nz(L.fan_out);
      for (std::size_t u = 0; u < L.fan_out; ++u) {
        LD s = L.bias[u];
        for (std::size_t i = 0; i < L.fan_in; ++i) s += static_cast<LD>(L.weights[u * L.fan_in + i]) * a[i];
        nz[u] = s;
      }
      z = std::move(nz);
    }
    return 0; // unreachable
  };

  NumericGradient g;
  g.weights.resize(depth);
  g.bias.resize(depth);
  g.weight_kink.resize(depth);
  g.bias_kink.resize(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& L = m.layers[k];
    g.weights[k].assign(L.weights.size(), 0);
    g.bias[k].assign(L.bias.size(), 0);
    g.weight_kink[k].assign(L.weights.size(), 0);
    g.bias_kink[k].assign(L.bias.size(), 0);
    for (std::size_t o = 0; o < L.fan_out; ++o) {
      for (std::size_t i = 0; i <= L.fan_in; ++i) {
        const bool is_bias = i == L.fan_in;
        LD plus = 0, minus = 0;
        bool kink = false;
        for (std::size_t b = 0; b < n; ++b) {
          const LD input = is_bias ? 1.0L : (k == 0 ? static_cast<LD>(features[b * in + i]) : base[b].a[k - 1][i]);
          if (input == 0) {
            const LD l0 = ref_bce(base[b].z[depth - 1][0], labels[b]);
            plus += l0;
            minus += l0;
            continue;
          }
          plus += shifted_loss(b, k, o, h * input, kink);
          minus += shifted_loss(b, k, o, -h * input, kink);
        }
        const LD d = (plus - minus) / (2 * h * static_cast<LD>(n));
        if (is_bias) {
          g.bias[k][o] = d;
          g.bias_kink[k][o] = kink;
        } else {
          g.weights[k][o * L.fan_in + i] = d;
          g.weight_kink[k][o * L.fan_in + i] = kink;
        }
        g.kinks += kink;
      }
    }
  }
  return g;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t refined = 0; // re-differenced with the fine step after a kink at h
  std::size_t skipped = 0; // kinked at both steps
};

// Compares loss_and_gradients against central_difference on every parameter.
// A parameter whose +-h runs cross a ReLU kink is re-differenced with
// fine_h; it is skipped only if that crosses a kink too.
inline GradientCheck check_gradients(const saplma::probe::ProbeModel& m, std::span<const double> features,
                                     std::span<const std::uint8_t> labels, long double h = 1e-6L,
                                     long double fine_h = 1e-6L) {
  const auto analytic = saplma::probe::loss_and_gradients(m, {features, labels});
  const auto coarse = central_difference(m, features, labels, h);
  std::optional<NumericGradient> fine;
  if (coarse.kinks > 0 && fine_h != h) fine = central_difference(m, features, labels, fine_h);
  GradientCheck c;
  auto compare = [&](double a, LD n_coarse, bool kink_coarse, LD n_fine, bool kink_fine) {
    LD n = n_coarse;
    if (kink_coarse) {
      if (!fine || kink_fine) {
        ++c.skipped;
        return;
      }
      n = n_fine;
      ++c.refined;
    }
    c.max_relative_error = std::max(c.max_relative_error, relative_error(a, static_cast<double>(n)));
    ++c.checked;
  };
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& ga = analytic.gradients.layers[k];
    for (std::size_t p = 0; p < ga.weights.size(); ++p) {
      compare(ga.weights[p], coarse.weights[k][p], coarse.weight_kink[k][p], fine ? fine->weights[k][p] : 0,
              fine ? fine->weight_kink[k][p] : true);
    }
    for (std::size_t p = 0; p < ga.bias.size(); ++p) {
      compare(ga.bias[p], coarse.bias[k][p], coarse.bias_kink[k][p], fine ? fine->bias[k][p] : 0,
              fine ? fine->bias_kink[k][p] : true);
    }
  }
  return c;
}

} // namespace testsupport
