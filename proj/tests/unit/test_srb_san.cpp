#include "doctest.h"
#include "helpers.hpp"
#include "san/dense_ops.hpp"
#include "san/errors.hpp"
#include "san/san.hpp"

using namespace san;

namespace {

ParamStore<double> san_store(const SanConfig& cfg, std::uint64_t seed = 1) {
  ParamStore<double> store;
  Rng rng(seed);
  init_san_params(store, cfg, rng);
  return store;
}

SanConfig small_config() {
  SanConfig cfg;
  cfg.widths = {4, 6, 8, 8};
  return cfg;
}

}  // namespace

TEST_CASE("srb on an empty input is empty") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  const auto x = sparse_leaf(SparseTensor<double>::empty(16, 16, 1));
  const auto y = srb_forward(x, store, srb_prefix(0), 3, BatchNormMode::Train);
  CHECK(y.size() == 0);
  CHECK(y.width == 8);
}

TEST_CASE("srb maps a single pixel at (4,4) to (2,2)") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  SparseTensor<double> s({{4, 4, 0}}, Tensor<double>({1, 1}, 3.0), 16, 16);
  const auto y = srb_forward(sparse_leaf(s), store, srb_prefix(0), 3, BatchNormMode::Eval);
  REQUIRE(y.size() == 1);
  CHECK((*y.coords)[0] == Coord{2, 2, 0});
  CHECK(y.channels() == 4);
}

TEST_CASE("srb with zero weights and biases outputs zeros") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  for (auto& e : store.entries()) {
    if (e.name.find(".conv.") != std::string::npos) e.node->value.fill(0.0);
  }
  const auto s = sparsify(test::random_depth(16, 16, 0.3, 2));
  const auto y = srb_forward(sparse_leaf(s), store, srb_prefix(0), 3, BatchNormMode::Eval);
  CHECK(y.size() > 0);
  for (double v : y.feats->value.span()) CHECK(v == 0.0);
}

TEST_CASE("srb branch count selects parameter sets") {
  for (int branches = 1; branches <= 3; ++branches) {
    auto cfg = small_config();
    cfg.branches = branches;
    auto store = san_store(cfg);
    const auto s = sparsify(test::random_depth(16, 16, 0.3, 3));
    store.start_trace();
    (void)srb_forward(sparse_leaf(s), store, srb_prefix(0), branches, BatchNormMode::Train);
    const auto used = store.stop_trace();
    std::size_t convs = 0;
    for (const auto& n : used) convs += n.ends_with(".conv.weight");
    // Branch b holds b conv blocks.
    CHECK(convs == std::size_t(branches * (branches + 1) / 2));
  }
}

TEST_CASE("srb rejects a channel mismatch") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  SparseTensor<double> s({{1, 1, 0}}, Tensor<double>({1, 2}, 1.0), 16, 16);
  CHECK_THROWS_AS(srb_forward(sparse_leaf(s), store, srb_prefix(0), 3, BatchNormMode::Eval), ContractError);
}

TEST_CASE("san_encode of an all-invalid map is exactly zero at every scale") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  const auto out = san_encode(Tensor<double>({1, 64, 64}), store, cfg, BatchNormMode::Train);
  REQUIRE(out.size() == 4);
  for (const auto& p : out) {
    for (double v : p->value.span()) CHECK(std::signbit(v) == false);
    for (double v : p->value.span()) CHECK(v == 0.0);
  }
}

TEST_CASE("san_encode scale shapes halve per block") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  const auto out = san_encode(test::random_depth(64, 64, 0.1, 4), store, cfg, BatchNormMode::Train);
  REQUIRE(out.size() == 4);
  const int sizes[] = {32, 16, 8, 4};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out[i]->value.shape() == Shape{cfg.widths[i], sizes[i], sizes[i]});
  }
}

TEST_CASE("first-scale nonzero pixels never exceed the valid input count") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = test::random_depth(32, 32, 0.02 + 0.05 * double(seed), seed + 10);
    const auto out = san_encode(d, store, cfg, BatchNormMode::Train);
    const auto& p = out[0]->value;
    std::size_t nonzero_pixels = 0;
    for (int v = 0; v < p.dim(1); ++v) {
      for (int u = 0; u < p.dim(2); ++u) {
        bool any = false;
        for (int c = 0; c < p.dim(0); ++c) any |= p.at(c, v, u) != 0.0;
        nonzero_pixels += any;
      }
    }
    CHECK(nonzero_pixels <= count_valid(d));
  }
}

TEST_CASE("san_encode rejects extents not divisible by 2^S") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  CHECK_THROWS_AS(san_encode(test::random_depth(24, 64, 0.1, 1), store, cfg, BatchNormMode::Eval), ContractError);
}

TEST_CASE("batched encode in eval mode matches single encodes") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  const auto a = test::random_depth(32, 32, 0.2, 5), b = test::random_depth(32, 32, 0.3, 6);
  const auto batched = san_encode_batch<double>({&a, &b}, store, cfg, BatchNormMode::Eval);
  const auto ea = san_encode(a, store, cfg, BatchNormMode::Eval);
  const auto eb = san_encode(b, store, cfg, BatchNormMode::Eval);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(test::max_abs_diff(batched[0][i]->value, ea[i]->value) < 1e-12);
    CHECK(test::max_abs_diff(batched[1][i]->value, eb[i]->value) < 1e-12);
  }
}

TEST_CASE("augment_skip at identity init returns K") {
  const auto k = test::random_tensor({2, 3, 3}, 7);
  const auto out = augment_skip(make_leaf(k), make_leaf(Tensor<double>({2, 3, 3})),
                                make_leaf(Tensor<double>({2}, 1.0)), make_leaf(Tensor<double>({2})));
  CHECK(out->value == k);
}

TEST_CASE("augment_skip with w = b = 0 returns P") {
  const auto p = test::random_tensor({2, 3, 3}, 8);
  const auto out = augment_skip(make_leaf(test::random_tensor({2, 3, 3}, 9)), make_leaf(p),
                                make_leaf(Tensor<double>({2})), make_leaf(Tensor<double>({2})));
  CHECK(out->value == p);
}

TEST_CASE("augment_skip w=2, b=1 on a 1-channel 2x2 map") {
  const Tensor<double> k({1, 2, 2}, {0.5, -1.0, 2.0, 0.25});
  const Tensor<double> p({1, 2, 2}, {1.0, 0.0, -3.0, 0.5});
  const auto out = augment_skip(make_leaf(k), make_leaf(p), make_leaf(Tensor<double>({1}, 2.0)),
                                make_leaf(Tensor<double>({1}, 1.0)));
  CHECK(out->value == Tensor<double>({1, 2, 2}, {3.0, -1.0, 2.0, 2.0}));
}

TEST_CASE("augment_skip rejects a shape mismatch") {
  CHECK_THROWS_AS(augment_skip(make_leaf(Tensor<double>({2, 2, 2})), make_leaf(Tensor<double>({2, 4, 4})),
                               Var<double>{}, Var<double>{}),
                  ContractError);
}

TEST_CASE("augment_skip is differentiable in all four inputs") {
  auto k = make_leaf(test::random_tensor({2, 2, 2}, 1), true);
  auto p = make_leaf(test::random_tensor({2, 2, 2}, 2), true);
  auto w = make_leaf(Tensor<double>({2}, 1.5), true);
  auto b = make_leaf(Tensor<double>({2}, 0.5), true);
  backward(sum(augment_skip(k, p, w, b)));
  for (double g : k->grad.span()) CHECK(g == 1.5);
  for (double g : p->grad.span()) CHECK(g == 1.0);
  CHECK(b->grad[0] == 4.0);
  CHECK(w->grad[0] == doctest::Approx(k->value[0] + k->value[1] + k->value[2] + k->value[3]));
}

TEST_CASE("w_i and b_i start at 1 and 0") {
  auto cfg = small_config();
  auto store = san_store(cfg);
  for (int i = 0; i < cfg.scales(); ++i) {
    CHECK(store.entry(skip_weight_name(i)).node->value == Tensor<double>({cfg.widths[std::size_t(i)]}, 1.0));
    CHECK(store.entry(skip_bias_name(i)).node->value == Tensor<double>({cfg.widths[std::size_t(i)]}));
  }
  cfg.use_wb = false;
  auto bare = san_store(cfg);
  CHECK_FALSE(bare.contains(skip_weight_name(0)));
}
