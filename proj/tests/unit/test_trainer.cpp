#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "san/checkpoint.hpp"
#include "san/depthnet.hpp"
#include "san/errors.hpp"
#include "san/losses.hpp"
#include "san/trainer.hpp"

using namespace san;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.apply({{"train_frames", "8"},
           {"val_frames", "2"},
           {"width", "16"},
           {"height", "16"},
           {"widths", "4,8"},
           {"stage1_epochs", "2"},
           {"stage2_epochs", "2"},
           {"val_every", "0"}});
  return c;
}

template <class T>
std::string checkpoint_bytes(const Checkpoint<T>& c) {
  std::stringstream ss;
  save_checkpoint(c, ss);
  return ss.str();
}

// Names of trainable parameters whose value differs between two stores.
template <class T>
std::set<std::string> changed(const ParamStore<T>& before, const ParamStore<T>& after) {
  std::set<std::string> out;
  for (const auto& e : after.entries()) {
    if (e.is_buffer) continue;
    if (!bitwise_equal(e.node->value, before.entry(e.name).node->value)) out.insert(e.name);
  }
  return out;
}

template <class T>
std::set<std::string> params_with_prefix(const ParamStore<T>& store, const std::string& prefix) {
  std::set<std::string> out;
  for (const auto& e : store.entries()) {
    if (!e.is_buffer && e.name.starts_with(prefix)) out.insert(e.name);
  }
  return out;
}

std::set<std::string> join(std::set<std::string> a, const std::set<std::string>& b) {
  a.insert(b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto kv = parse_key_values("# comment\nlr = 0.5\n\n  seed=3  # trailing\n");
  CHECK(kv.at("lr") == "0.5");
  CHECK(kv.at("seed") == "3");
  CHECK_THROWS_AS(parse_key_values("lr = 1\nlr = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ConfigError);

  TrainConfig c;
  CHECK_THROWS_AS(c.apply({{"bogus", "1"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"seed", "-1"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"joint", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"lr", "abc"}}), ConfigError);
  c.apply({{"widths", "8,16"}, {"joint", "false"}, {"lr", "0.002"}});
  CHECK(c.model.widths == std::vector<int>{8, 16});
  CHECK_FALSE(c.joint);
  CHECK(c.optim.lr == 0.002);
  CHECK(TrainConfig::from_text(c.to_text()) == c);
}

TEST_CASE("config defaults and validation") {
  TrainConfig c;
  CHECK(c.stage1_epochs == 15);
  CHECK(c.stage2_epochs == 10);
  CHECK(c.accum == 4);
  CHECK(c.lambda == 0.85);
  CHECK(c.optim.lr_decay_every == 10);
  CHECK(c.optim.lr_decay_factor == 2.0);
  CHECK(c.data.train_frames == 512);
  CHECK(c.data.val_frames == 64);
  CHECK(c.freeze_pred_encoder);
  CHECK(c.joint);
  CHECK_NOTHROW(c.validate());
  auto bad = [](const std::map<std::string, std::string>& kv) {
    TrainConfig t;
    t.apply(kv);
    return t;
  };
  CHECK_THROWS_AS(bad({{"lambda", "1.5"}}).validate(), ConfigError);
  CHECK_THROWS_AS(bad({{"stage1_epochs", "-1"}}).validate(), ConfigError);
  CHECK_THROWS_AS(bad({{"srb_branches", "4"}}).validate(), ConfigError);
  CHECK_THROWS_AS(bad({{"width", "60"}}).validate(), ConfigError);
  CHECK_THROWS_AS(bad({{"accum", "0"}}).validate(), ConfigError);
  CHECK_THROWS_AS(bad({{"train_sparsity_min", "0.6"}}).validate(), ConfigError);
}

TEST_CASE("learning rate schedule across stages") {
  TrainConfig c;
  c.optim.lr = 1e-4;
  c.optim.lr_decay_every = 10;
  c.stage1_epochs = 15;
  CHECK(epoch_lr(c, 0) == 1e-4);
  CHECK(epoch_lr(c, 10) == 5e-5);
  CHECK(epoch_lr(c, 20) == 2.5e-5);
  c.lr_decay_reset_stage2 = true;
  CHECK(epoch_lr(c, 15) == 1e-4);
  CHECK(epoch_lr(c, 14) == 5e-5);
}

TEST_CASE("prediction-only run leaves the SAN at initialization") {
  auto cfg = tiny_config();
  cfg.stage2_epochs = 0;
  const auto data = make_dataset<float>(cfg.data);
  const auto init = init_checkpoint<float>(cfg);
  const auto out = train<float>(cfg, data);
  const auto diff = changed(init.params, out.params);
  for (const auto& n : diff) CHECK_MESSAGE(n.starts_with("rgb."), n);
  CHECK(diff == params_with_prefix(out.params, "rgb."));
  for (const auto& e : out.params.entries()) {
    if (e.name.starts_with(kSanPrefix)) CHECK(bitwise_equal(e.node->value, init.params.entry(e.name).node->value));
  }
}

TEST_CASE("freeze ledger matches the policy in each stage") {
  struct Case {
    bool freeze_encoder, freeze_decoder;
  };
  for (const Case& k : {Case{true, false}, Case{false, false}, Case{true, true}}) {
    auto cfg = tiny_config();
    cfg.freeze_pred_encoder = k.freeze_encoder;
    cfg.freeze_pred_decoder = k.freeze_decoder;
    const auto data = make_dataset<float>(cfg.data);
    const auto init = init_checkpoint<float>(cfg);
    std::optional<Checkpoint<float>> boundary;
    TrainHooks<float> hooks;
    hooks.on_stage_boundary = [&](const Checkpoint<float>& c) { boundary = c; };
    const auto out = train<float>(cfg, data, hooks);
    REQUIRE(boundary);
    CHECK(boundary->epochs_done == cfg.stage1_epochs);

    const auto enc = params_with_prefix(out.params, kEncoderPrefix);
    const auto dec = params_with_prefix(out.params, kDecoderPrefix);
    const auto san = params_with_prefix(out.params, kSanPrefix);
    CHECK(changed(init.params, boundary->params) == join(enc, dec));

    std::set<std::string> expected = san;
    if (!k.freeze_encoder) expected = join(expected, enc);
    if (!k.freeze_decoder) expected = join(expected, dec);
    CHECK(changed(boundary->params, out.params) == expected);

    double frozen_delta = 0;
    for (const auto& name : enc) {
      const auto& a = boundary->params.entry(name).node->value;
      const auto& b = out.params.entry(name).node->value;
      for (std::size_t i = 0; i < a.numel(); ++i) frozen_delta += std::abs(double(a[i]) - double(b[i]));
    }
    if (k.freeze_encoder) CHECK(frozen_delta == 0.0);
  }
}

TEST_CASE("identical configs train to identical checkpoints") {
  const auto cfg = tiny_config();
  const auto data = make_dataset<float>(cfg.data);
  CHECK(checkpoint_bytes(train<float>(cfg, data)) == checkpoint_bytes(train<float>(cfg, data)));
  auto other = cfg;
  other.seed = 2;
  CHECK(checkpoint_bytes(train<float>(other, data)) != checkpoint_bytes(train<float>(cfg, data)));
}

TEST_CASE("resuming reproduces an uninterrupted run bitwise") {
  const auto cfg = tiny_config();
  const auto data = make_dataset<float>(cfg.data);
  const auto full = checkpoint_bytes(train<float>(cfg, data));
  for (int split : {1, 2, 3}) {
    const auto part = train<float>(cfg, data, {}, std::nullopt, split);
    CHECK(part.epochs_done == split);
    std::stringstream ss(checkpoint_bytes(part));
    auto reloaded = load_checkpoint<float>(ss);
    CHECK(checkpoint_bytes(train<float>(cfg, data, {}, std::move(reloaded))) == full);
  }
}

TEST_CASE("logged stage-2 loss equals silog(P) + silog(C)") {
  auto cfg = tiny_config();
  cfg.stage1_epochs = 0;
  cfg.stage2_epochs = 1;
  cfg.data.train_frames = 1;
  cfg.accum = 1;
  const auto data = make_dataset<double>(cfg.data);
  std::vector<EpochLog> logs;
  TrainHooks<double> hooks;
  hooks.on_log = [&](const EpochLog& l) { logs.push_back(l); };
  (void)train<double>(cfg, data, hooks);
  REQUIRE(!logs.empty());
  CHECK(logs[0].stage == 2);

  auto init = init_checkpoint<double>(cfg);
  apply_freeze_policy(init.params, cfg, 2);
  const DepthNet<double> net(cfg.model);
  const auto& frame = data.train[0];
  const auto sparse = training_sparse_input(cfg, frame.depth, 0, 0, 1);
  CHECK(count_valid(sparse) > 0);
  const auto out = net.forward_both(init.params, frame.image, sparse, BatchNormMode::Train);
  const double expected = silog_value(frame.depth, out.prediction->value, 0.85) +
                          silog_value(frame.depth, out.completion->value, 0.85);
  CHECK(std::abs(logs[0].train_loss - expected) < 1e-6);

  cfg.joint = false;
  logs.clear();
  (void)train<double>(cfg, data, hooks);
  CHECK(std::abs(logs[0].train_loss - silog_value(frame.depth, out.completion->value, 0.85)) < 1e-6);
}

TEST_CASE("non-finite loss aborts with a divergence error") {
  auto cfg = tiny_config();
  cfg.data.train_frames = 2;
  auto data = make_dataset<float>(cfg.data);
  data.train[1].depth[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(train<float>(cfg, data), DivergenceError);
  data.train.clear();
  CHECK_THROWS_AS(train<float>(cfg, data), ContractError);
}

TEST_CASE("evaluation contracts") {
  const auto cfg = tiny_config();
  const auto data = make_dataset<float>(cfg.data);
  auto ckpt = train<float>(cfg, data);
  const auto pred = evaluate(ckpt, data.val, EvalMode::Prediction, 0.0, 7, 80.0);
  CHECK(evaluate(ckpt, data.val, EvalMode::Prediction, 0.0, 7, 80.0) == pred);
  CHECK(evaluate(ckpt, data.val, EvalMode::Completion, 0.0, 7, 80.0) == pred);
  CHECK_FALSE(evaluate(ckpt, data.val, EvalMode::Completion, 0.5, 7, 80.0) == pred);
  CHECK_THROWS_AS(evaluate(ckpt, std::vector<Frame<float>>{}, EvalMode::Prediction, 0.0, 7, 80.0), ContractError);

  const auto rows = sparsity_sweep(ckpt, data.val, {0.0, 0.2, 1.0}, 7, 80.0);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].mode == EvalMode::Prediction);
  CHECK(rows[1].report == pred);
  CHECK(rows[2].report == evaluate(ckpt, data.val, EvalMode::Completion, 0.2, 7, 80.0));
  CHECK_THROWS_AS(sparsity_sweep(ckpt, data.val, {1.5}, 7, 80.0), ConfigError);
  const auto csv = sweep_csv(rows);
  CHECK(csv.starts_with("mode,level,abs_rel,"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("epoch log csv columns") {
  EpochLog log{3, 2, 1e-3, 0.5, EvalMode::Completion, std::nullopt};
  CHECK(EpochLog::csv_header() == "epoch,stage,lr,train_loss,mode,abs_rel,sq_rel,rmse,rmse_log,silog,a1,a2,a3");
  const auto row = log.csv_row();
  CHECK(row.starts_with("3,2,0.001,0.5,completion,"));
  CHECK(std::count(row.begin(), row.end(), ',') == 12);
}

TEST_CASE("checkpoint round trip and errors") {
  const auto cfg = tiny_config();
  const auto data = make_dataset<double>(cfg.data);
  const auto ckpt = train<double>(cfg, data, {}, std::nullopt, 3);
  const auto bytes = checkpoint_bytes(ckpt);
  std::stringstream ss(bytes);
  const auto back = load_checkpoint<double>(ss);
  CHECK(back.epochs_done == 3);
  CHECK(back.config == cfg);
  CHECK(checkpoint_bytes(back) == bytes);
  for (const auto& e : ckpt.params.entries()) {
    const auto& r = back.params.entry(e.name);
    CHECK(bitwise_equal(r.node->value, e.node->value));
    CHECK(r.frozen == e.frozen);
    CHECK(r.step == e.step);
  }

  std::stringstream wrong_width(bytes);
  CHECK_THROWS_AS(load_checkpoint<float>(wrong_width), ConfigError);
  std::stringstream bad_magic("XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint<double>(bad_magic), ParseError);
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint<double>(truncated), ParseError);
}

TEST_CASE("spearman correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Monotone but nonlinear is still perfect.
  CHECK(spearman({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}) == doctest::Approx(1.0));
  // Ties take average ranks: ranks y = 1, 2.5, 2.5, 4 against 1..4.
  CHECK(spearman({1, 2, 3, 4}, {1, 2, 2, 3}) == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)));
  CHECK_THROWS_AS(spearman({1}, {1}), ContractError);
}

TEST_CASE("ablation grid covers every axis") {
  const auto grid = ablation_grid(TrainConfig{});
  std::map<std::string, TrainConfig> by_name(grid.begin(), grid.end());
  CHECK(by_name.at("srb_x1").model.srb_branches == 1);
  CHECK(by_name.at("srb_x2").model.srb_branches == 2);
  CHECK_FALSE(by_name.at("unfreeze_pred_encoder").freeze_pred_encoder);
  CHECK(by_name.at("freeze_pred_decoder").freeze_pred_decoder);
  CHECK_FALSE(by_name.at("no_wb").model.use_wb);
  CHECK(by_name.at("prediction").stage2_epochs == 0);
  CHECK_FALSE(by_name.at("completion").joint);
  CHECK(by_name.at("san") == TrainConfig{});
}

TEST_CASE("dense sparse input beats prediction on a briefly trained model") {
  TrainConfig cfg;
  cfg.apply({{"train_frames", "48"},
             {"val_frames", "8"},
             {"width", "32"},
             {"height", "32"},
             {"widths", "8,16"},
             {"stage1_epochs", "4"},
             {"stage2_epochs", "4"},
             {"val_every", "0"}});
  const auto data = make_dataset<float>(cfg.data);
  auto ckpt = train<float>(cfg, data);
  const DepthNet<float> net(cfg.model);
  double pred = 0, comp = 0;
  for (const auto& f : data.val) {
    pred += silog_value(f.depth, net.predict(ckpt.params, f.image), 0.85f);
    comp += silog_value(f.depth, net.complete(ckpt.params, f.image, f.depth), 0.85f);
  }
  INFO("prediction " << pred << " completion " << comp);
  CHECK(comp < pred);
}
