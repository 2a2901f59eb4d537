#include "doctest.h"
#include "helpers.hpp"
#include "san/data.hpp"
#include "san/dense_ops.hpp"
#include "san/depthnet.hpp"
#include "san/errors.hpp"
#include "san/losses.hpp"

using namespace san;

namespace {

DepthNetConfig tiny_config() {
  DepthNetConfig cfg;
  cfg.widths = {3, 4};
  return cfg;
}

struct Fixture {
  DepthNet<double> net;
  ParamStore<double> store;
  Frame<double> frame;

  explicit Fixture(DepthNetConfig cfg = tiny_config(), int size = 16, std::uint64_t seed = 1) : net(std::move(cfg)) {
    net.init_params(store, seed);
    SceneSpec spec;
    spec.width = spec.height = size;
    spec.seed = seed;
    frame = gen_scene<double>(spec).frame;
  }
};

}  // namespace

TEST_CASE("prediction stays strictly inside (d_min, d_max)") {
  Fixture f(DepthNetConfig{}, 64);
  const auto d = f.net.predict(f.store, f.frame.image);
  CHECK(d.shape() == Shape{1, 64, 64});
  for (double v : d.span()) {
    CHECK(v > 0.1);
    CHECK(v < 100.0);
  }
}

TEST_CASE("output range holds for extreme weights and inputs") {
  for (double scale : {1e3, -1e3}) {
    Fixture f;
    f.store.entry("rgb.dec.head.bias").node->value[0] = scale;
    ImageTensor<double> img({3, 16, 16}, 1e6);
    const auto d = f.net.predict(f.store, img);
    for (double v : d.span()) {
      CHECK(std::isfinite(v));
      CHECK(v > 0.1);
      CHECK(v < 100.0);
    }
    // The float path saturates earlier; the bound must still be open.
    DepthNet<float> netf(tiny_config());
    ParamStore<float> sf;
    netf.init_params(sf, 1);
    sf.entry("rgb.dec.head.bias").node->value[0] = float(scale);
    const auto df = netf.predict(sf, img.cast<float>());
    for (float v : df.span()) {
      CHECK(v > 0.1f);
      CHECK(v < 100.0f);
    }
  }
}

TEST_CASE("prediction is deterministic") {
  Fixture f;
  CHECK(bitwise_equal(f.net.predict(f.store, f.frame.image), f.net.predict(f.store, f.frame.image)));
}

TEST_CASE("completion with an empty sparse map equals prediction bitwise") {
  Fixture f;
  const DepthMap<double> empty({1, 16, 16});
  const auto pred = f.net.predict(f.store, f.frame.image);
  CHECK(bitwise_equal(f.net.complete(f.store, f.frame.image, empty), pred));
  // Negative entries are missing too.
  CHECK(bitwise_equal(f.net.complete(f.store, f.frame.image, DepthMap<double>({1, 16, 16}, -1.0)), pred));
  const auto both = f.net.forward_both(f.store, f.frame.image, empty, BatchNormMode::Train);
  CHECK(bitwise_equal(both.completion->value, both.prediction->value));
}

TEST_CASE("completion with sparse depth differs from prediction") {
  Fixture f;
  const auto sparse = sample_sparse(f.frame.depth, SparsitySpec::with_fraction(0.3, 2));
  CHECK_FALSE(bitwise_equal(f.net.complete(f.store, f.frame.image, sparse), f.net.predict(f.store, f.frame.image)));
}

TEST_CASE("prediction reads a strict subset of the completion parameters") {
  Fixture f;
  f.store.start_trace();
  (void)f.net.predict(f.store, f.frame.image);
  const auto pred = f.store.stop_trace();
  const auto sparse = sample_sparse(f.frame.depth, SparsitySpec::with_fraction(0.5, 3));
  f.store.start_trace();
  (void)f.net.complete(f.store, f.frame.image, sparse);
  const auto comp = f.store.stop_trace();
  CHECK(std::includes(comp.begin(), comp.end(), pred.begin(), pred.end()));
  CHECK(comp.size() > pred.size());
  for (const auto& name : pred) CHECK_MESSAGE(name.starts_with("rgb."), name);
  CHECK(comp.count("san.skip0.w") == 1);
  // Fallback reads nothing beyond prediction.
  f.store.start_trace();
  (void)f.net.complete(f.store, f.frame.image, DepthMap<double>({1, 16, 16}));
  CHECK(f.store.stop_trace() == pred);
}

TEST_CASE("extent errors") {
  Fixture f;
  CHECK_THROWS_AS(f.net.predict(f.store, ImageTensor<double>({3, 18, 16})), ContractError);
  CHECK_THROWS_AS(f.net.predict(f.store, ImageTensor<double>({1, 16, 16})), ContractError);
  CHECK_THROWS_AS(f.net.complete(f.store, f.frame.image, DepthMap<double>({1, 8, 8}, 1.0)), ContractError);
}

TEST_CASE("config validation") {
  DepthNetConfig cfg;
  cfg.srb_branches = 4;
  CHECK_THROWS_AS(DepthNet<double>{cfg}, ConfigError);
  cfg = {};
  cfg.d_min = 10;
  cfg.d_max = 5;
  CHECK_THROWS_AS(DepthNet<double>{cfg}, ConfigError);
  cfg = {};
  cfg.widths.clear();
  CHECK_THROWS_AS(DepthNet<double>{cfg}, ConfigError);
}

TEST_CASE("prediction gradient matches finite differences for every RGB parameter") {
  Fixture f(tiny_config(), 8, 4);
  // Zero-initialized biases put dead-input pixels exactly on the relu kink,
  // where finite differences are meaningless. Randomize them.
  Rng init(9);
  for (auto& e : f.store.entries()) {
    if (e.name.ends_with(".bias") && e.name != "rgb.dec.head.bias") {
      for (auto& v : e.node->value.vec()) v = init.uniform(-0.1, 0.1);
    }
  }
  const double lambda = 0.85, h = 1e-4;
  auto loss_value = [&] {
    NoGradGuard guard;
    return silog(f.frame.depth, f.net.forward_prediction(f.store, f.frame.image), lambda)->value[0];
  };
  f.store.zero_grad();
  backward(silog(f.frame.depth, f.net.forward_prediction(f.store, f.frame.image), lambda));
  Rng rng(5);
  for (auto& e : f.store.entries()) {
    if (e.is_buffer || !e.name.starts_with("rgb.")) continue;
    REQUIRE_MESSAGE(e.node->has_grad(), e.name);
    // Up to six sampled entries per tensor, compared as a vector.
    const std::size_t n = e.node->value.numel();
    double diff = 0, na = 0, nn = 0;
    for (int s = 0; s < 6; ++s) {
      const std::size_t i = n <= 6 ? std::size_t(s) % n : rng.below(n);
      double& p = e.node->value[i];
      const double keep = p;
      p = keep + h;
      const double up = loss_value();
      p = keep - h;
      const double down = loss_value();
      p = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = e.node->grad[i];
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    INFO(e.name << " rel " << rel);
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("stage-2 style backward reaches the SAN but not a frozen encoder") {
  Fixture f;
  f.store.set_frozen_prefix(kEncoderPrefix, true);
  f.store.zero_grad();
  const auto sparse = sample_sparse(f.frame.depth, SparsitySpec::with_fraction(0.3, 6));
  const auto out = f.net.forward_both(f.store, f.frame.image, sparse, BatchNormMode::Train);
  backward(joint_loss(f.frame.depth, out.prediction, out.completion, 0.85));
  double san_norm = 0;
  for (auto& e : f.store.entries()) {
    if (e.is_buffer) continue;
    if (e.name.starts_with(kEncoderPrefix)) {
      const bool zero = !e.node->has_grad() ||
                        std::all_of(e.node->grad.span().begin(), e.node->grad.span().end(), [](double g) { return g == 0; });
      CHECK_MESSAGE(zero, e.name);
    } else if (e.name.starts_with(kSanPrefix)) {
      REQUIRE_MESSAGE(e.node->has_grad(), e.name);
      for (double g : e.node->grad.span()) san_norm += g * g;
    }
  }
  CHECK(san_norm > 0);
  for (const char* name : {"san.skip0.w", "san.skip0.b", "san.skip1.w", "san.skip1.b"}) {
    const auto& g = f.store.entry(name).node->grad;
    CHECK_MESSAGE(std::any_of(g.span().begin(), g.span().end(), [](double x) { return x != 0; }), name);
  }
}
