#include "doctest.h"

#include <cmath>
#include <numbers>

#include "saplma/error.hpp"
#include "saplma/kernels.hpp"
#include "saplma/probe_net.hpp"
#include "saplma/rng.hpp"
#include "support.hpp"

using namespace saplma;
using namespace saplma::probe;

namespace {

std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<std::uint8_t> coin_labels(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(2));
  return y;
}

} // namespace

TEST_CASE("parameter count of the standard probe") {
  CHECK(init_probe(4096, 1).parameter_count() == 1090049);
  CHECK(init_probe(8, 1).parameter_count() == 8 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 65);
  CHECK(init_probe(4096, 1).layer_dims == std::vector<std::size_t>{4096, 256, 128, 64, 1});
}

TEST_CASE("init bounds, zero biases, determinism") {
  const auto m = init_probe(40, 9);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& L = m.layers[k];
    const double gain = k + 1 == m.layers.size() ? 3.0 : 6.0;
    const double bound = std::sqrt(gain / static_cast<double>(L.fan_in));
    for (double w : L.weights) CHECK(std::abs(w) <= bound);
    for (double b : L.bias) CHECK(b == 0.0);
  }
  CHECK(init_probe(40, 9) == m);
  CHECK_FALSE(init_probe(40, 10) == m);
  CHECK_THROWS_AS(init_probe(0, 1), Error);
}

TEST_CASE("forward agrees with the long-double reference") {
  Rng rng(3);
  const auto m = init_probe(std::vector<std::size_t>{12, 16, 8, 1}, 5);
  for (int t = 0; t < 20; ++t) {
    const auto x = normal_vector(rng, 12);
    const auto ref = testsupport::ref_forward(m, x);
    const double p_ref = static_cast<double>(1.0L / (1.0L + std::exp(-ref.z.back()[0])));
    CHECK(forward(m, x) == doctest::Approx(p_ref).epsilon(1e-12));
    std::vector<float> xf(x.begin(), x.end());
    std::vector<double> xd(xf.begin(), xf.end());
    CHECK(forward(m, std::span<const float>(xf)) == forward(m, std::span<const double>(xd)));
  }
  std::vector<double> wrong(11, 0.0);
  CHECK_THROWS_AS(forward(m, wrong), Error);
}

TEST_CASE("forward output strictly inside (0, 1)") {
  auto m = init_probe(std::vector<std::size_t>{2, 4, 1}, 1);
  std::vector<double> x{1.0, 1.0};
  m.layers.back().bias[0] = 1000.0;
  const double hi = forward(m, x);
  CHECK(hi < 1.0);
  CHECK(hi > 0.99);
  m.layers.back().bias[0] = -1000.0;
  CHECK(forward(m, x) > 0.0);
}

TEST_CASE("BCE at p = 0.5, y = 1 is ln 2") {
  auto m = init_probe(std::vector<std::size_t>{3, 4, 1}, 1);
  for (auto& L : m.layers) std::fill(L.weights.begin(), L.weights.end(), 0.0);
  std::vector<double> x{0.3, -1.0, 2.0};
  std::vector<std::uint8_t> y{1};
  CHECK(forward(m, x) == 0.5);
  CHECK(batch_loss(m, {x, y}) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(loss_and_gradients(m, {x, y}).loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("saturated predictions: clamped loss, zero gradient") {
  auto m = init_probe(std::vector<std::size_t>{2, 3, 1}, 4);
  m.layers.back().bias[0] = 40.0;
  std::vector<double> x{0.1, 0.2};
  std::vector<std::uint8_t> y{1};
  const auto r = loss_and_gradients(m, {x, y});
  CHECK(r.loss == doctest::Approx(-std::log(1.0 - kProbClamp)).epsilon(1e-12));
  for (const auto& L : r.gradients.layers) {
    for (double g : L.weights) CHECK(g == 0.0);
    for (double g : L.bias) CHECK(g == 0.0);
  }
}

TEST_CASE("analytic gradients match central differences on a small network") {
  Rng rng(11);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = init_probe(std::vector<std::size_t>{5, 7, 6, 1}, 100 + s);
    const auto x = normal_vector(rng, 5 * 6);
    const auto y = coin_labels(rng, 6);
    const auto c = testsupport::check_gradients(m, x, y);
    CHECK(c.max_relative_error < 1e-6);
    CHECK(c.checked > 0);
  }
}

TEST_CASE("analytic gradients match central differences on the standard architecture") {
  Rng rng(12);
  const auto m = init_probe(8, 77);
  const auto x = normal_vector(rng, 8 * 4);
  const auto y = coin_labels(rng, 4);
  const auto c = testsupport::check_gradients(m, x, y);
  CHECK(c.max_relative_error < 1e-4);
  CHECK(c.skipped * 100 < c.checked);
}

TEST_CASE("Adam update matches the closed form") {
  auto m = init_probe(std::vector<std::size_t>{3, 2, 1}, 8);
  const auto start = m;
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  Gradients g;
  g.layers = m.layers;
  Rng rng(2);
  for (auto& L : g.layers) {
    for (auto& v : L.weights) v = rng.normal();
    for (auto& v : L.bias) v = rng.normal();
  }
  auto state = AdamState::zeros_like(m);
  adam_step(m, state, g, cfg);
  adam_step(m, state, g, cfg);
  CHECK(state.step == 2);
  // Constant gradient g for two steps: m_hat = g, v_hat = g^2.
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    for (std::size_t p = 0; p < m.layers[k].weights.size(); ++p) {
      const double gv = g.layers[k].weights[p];
      const double step = cfg.learning_rate * gv / (std::abs(gv) + cfg.epsilon);
      CHECK(m.layers[k].weights[p] == doctest::Approx(start.layers[k].weights[p] - 2 * step).epsilon(1e-12));
    }
  }
}

TEST_CASE("train_probe is deterministic and seed-sensitive") {
  Rng rng(5);
  const std::size_t n = 80, d = 6;
  std::vector<float> feats(n * d);
  std::vector<std::uint8_t> y(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    y[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
    for (std::size_t j = 0; j < d; ++j) feats[i * d + j] = static_cast<float>(rng.normal() + (y[i] ? 1.5 : -1.5));
  }
  TrainConfig cfg;
  cfg.seed = 3;
  TrainingSet ts{feats, d, rows, y};
  std::vector<EpochLog> logs;
  const auto a = train_probe(ts, cfg, [&](const EpochLog& l) { logs.push_back(l); });
  const auto b = train_probe(ts, cfg);
  CHECK(a == b);
  REQUIRE(logs.size() == 5);
  CHECK(logs.back().mean_loss < logs.front().mean_loss);
  cfg.seed = 4;
  CHECK_FALSE(train_probe(ts, cfg) == a);

  const auto p = predict(a, feats, d, rows);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) hit += (p[i] > 0.5) == (y[i] != 0);
  CHECK(hit >= 76);
}

TEST_CASE("standardisation is fitted on training rows and survives a checkpoint") {
  Rng rng(6);
  const std::size_t n = 40, d = 3;
  std::vector<float> feats(n * d);
  std::vector<std::uint8_t> y(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    y[i] = static_cast<std::uint8_t>(i % 2);
    for (std::size_t j = 0; j < d; ++j) feats[i * d + j] = static_cast<float>(100.0 + 10.0 * rng.normal());
  }
  TrainConfig cfg;
  cfg.standardize = true;
  cfg.epochs = 2;
  const auto m = train_probe({feats, d, rows, y}, cfg);
  REQUIRE(m.input_mean.size() == d);
  double mean0 = 0;
  for (std::size_t i = 0; i < n; ++i) mean0 += feats[i * d];
  CHECK(m.input_mean[0] == doctest::Approx(mean0 / n).epsilon(1e-9));
  const auto ck = decode_checkpoint(encode_checkpoint(m, cfg));
  CHECK(ck.model == m);
  CHECK(ck.config == cfg);
}

TEST_CASE("checkpoint round trip is lossless and rejects damage") {
  const auto m = init_probe(10, 21);
  TrainConfig cfg;
  cfg.seed = 21;
  cfg.epochs = 7;
  const auto bytes = encode_checkpoint(m, cfg);
  CHECK(bytes.substr(0, 8) == "SAPLPRB1");
  const auto ck = decode_checkpoint(bytes);
  CHECK(ck.model == m);
  CHECK(ck.config == cfg);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), Error);

  const auto dir = testsupport::temp_dir("ckpt");
  save_checkpoint(m, cfg, dir / "p.bin");
  CHECK(load_checkpoint(dir / "p.bin").model == m);
}

TEST_CASE("config validation and fingerprint") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.learning_rate = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  auto other_seed = cfg;
  other_seed.seed = 99;
  CHECK(fingerprint(cfg) == fingerprint(other_seed));
  auto other_lr = cfg;
  other_lr.learning_rate = 2e-3;
  CHECK(fingerprint(cfg) != fingerprint(other_lr));
  CHECK(train_config_from_json(to_json(other_lr)) == other_lr);
}

TEST_CASE("training agrees across kernel variants") {
  Rng rng(8);
  const std::size_t n = 64, d = 20;
  std::vector<float> feats(n * d);
  std::vector<std::uint8_t> y(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    y[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
    for (std::size_t j = 0; j < d; ++j) feats[i * d + j] = static_cast<float>(rng.normal());
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto previous = kernels::active().isa;
  kernels::select(kernels::Isa::scalar);
  const auto ref = train_probe({feats, d, rows, y}, cfg);
  const auto p_ref = predict(ref, feats, d, rows);
  for (auto isa : kernels::available_isas()) {
    kernels::select(isa);
    const auto p = predict(train_probe({feats, d, rows, y}, cfg), feats, d, rows);
    for (std::size_t i = 0; i < n; ++i) CHECK(p[i] == doctest::Approx(p_ref[i]).epsilon(1e-9));
  }
  kernels::select(previous);
}

TEST_CASE("fixed tiny model equals a straight-line matrix chain") {
  const auto m = init_probe(std::vector<std::size_t>{2, 256, 128, 64, 1}, 7);
  const std::vector<double> x{0.25, -1.5};
  std::vector<double> a(x);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& L = m.layers[k];
    std::vector<double> z(L.fan_out);
    for (std::size_t o = 0; o < L.fan_out; ++o) {
      double s = L.bias[o];
      for (std::size_t i = 0; i < L.fan_in; ++i) s += L.weights[o * L.fan_in + i] * a[i];
      z[o] = k < 3 ? std::max(s, 0.0) : s;
    }
    a = z;
  }
  CHECK(forward(m, x) == doctest::Approx(1.0 / (1.0 + std::exp(-a[0]))).epsilon(1e-12));

  auto zero = m;
  for (auto& L : zero.layers) {
    std::fill(L.weights.begin(), L.weights.end(), 0.0);
    std::fill(L.bias.begin(), L.bias.end(), 0.0);
  }
  CHECK(forward(zero, x) == 0.5);
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
  Rng rng(13);
  const auto m = init_probe(std::vector<std::size_t>{4, 6, 1}, 2);
  const auto x = normal_vector(rng, 4);
  std::vector<double> xx(x);
  xx.insert(xx.end(), x.begin(), x.end());
  const std::vector<std::uint8_t> y{1}, yy{1, 1};
  const auto one = loss_and_gradients(m, {x, y});
  const auto two = loss_and_gradients(m, {xx, yy});
  CHECK(two.loss == doctest::Approx(one.loss).epsilon(1e-14));
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    for (std::size_t p = 0; p < m.layers[k].weights.size(); ++p) {
      CHECK(two.gradients.layers[k].weights[p] == doctest::Approx(one.gradients.layers[k].weights[p]).epsilon(1e-14));
    }
  }
}

TEST_CASE("Adam: zero gradients, first step size, symmetry") {
  auto m = init_probe(std::vector<std::size_t>{1, 1}, 3);
  const auto start = m;
  TrainConfig cfg;
  auto state = AdamState::zeros_like(m);
  Gradients g;
  g.layers = {DenseLayer(1, 1)};
  adam_step(m, state, g, cfg);
  CHECK(m == start);
  CHECK(state.step == 1);

  state = AdamState::zeros_like(m);
  m.layers[0].bias[0] = m.layers[0].weights[0];
  g.layers[0].weights[0] = 1.0;
  g.layers[0].bias[0] = 1.0;
  adam_step(m, state, g, cfg);
  const double dw = m.layers[0].weights[0] - start.layers[0].weights[0];
  CHECK(dw == doctest::Approx(-cfg.learning_rate).epsilon(1e-7));
  CHECK(m.layers[0].bias[0] == m.layers[0].weights[0]);
}

TEST_CASE("gradient check with a coarse step") {
  Rng rng(12);
  const auto m = init_probe(8, 77);
  const auto x = normal_vector(rng, 8 * 4);
  const auto y = coin_labels(rng, 4);
  const auto c = testsupport::check_gradients(m, x, y, 1e-3L);
  MESSAGE("h=1e-3: max rel err " << c.max_relative_error << ", kinks skipped " << c.skipped);
  CHECK(c.max_relative_error < 1e-4);
}
