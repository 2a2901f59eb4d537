// san: command-line driver for data generation, training and evaluation.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure. Failures
// also print one JSON object on stderr: {"error": kind, "exit_code": n,
// "message": text}.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "san/checkpoint.hpp"
#include "san/config.hpp"
#include "san/data.hpp"
#include "san/depthnet.hpp"
#include "san/dmap.hpp"
#include "san/errors.hpp"
#include "san/gradcheck.hpp"
#include "san/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string precision;  // empty: command default
  std::vector<std::string> overrides;
};

struct Options {
  Common common;
  std::string data_dir;
  std::string checkpoint;
  std::string resume;
  std::string rgb;
  std::string sparse;
  std::string mode = "completion";
  std::optional<double> sparsity;
  std::vector<double> levels{0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::optional<int> stop_after;
  std::string split = "val";
};

void fail_config(const std::string& msg) { throw san::ConfigError(msg); }

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, std::string> kv;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail_config("--set expects key=value, got '" + item + "'");
    if (!kv.emplace(item.substr(0, eq), item.substr(eq + 1)).second)
      fail_config("--set repeats key '" + item.substr(0, eq) + "'");
  }
  return kv;
}

san::TrainConfig build_config(const Common& c) {
  san::TrainConfig cfg = c.config_path.empty() ? san::TrainConfig{} : san::TrainConfig::from_file(c.config_path);
  if (c.seed) {
    // One master seed drives both the data and the model unless data_seed is
    // overridden explicitly below.
    cfg.seed = *c.seed;
    cfg.data.seed = *c.seed;
  }
  cfg.apply(parse_overrides(c.overrides));
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw san::Error("cannot open '" + path.string() + "' for writing");
  return out;
}

/// Writes `text` to `path`, or stdout when `path` is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  auto out = open_out(path);
  out << text;
}

bool use_double(const std::string& precision) {
  if (precision.empty() || precision == "f32") return false;
  if (precision == "f64") return true;
  fail_config("--precision must be f32 or f64");
  return false;
}

/// Precision for commands that read a checkpoint: the file decides, and an
/// explicit --precision must agree with it.
bool checkpoint_double(const Options& o) {
  if (o.checkpoint.empty()) fail_config("--checkpoint is required");
  const bool file_double = san::checkpoint_value_bytes(o.checkpoint) == 8;
  if (!o.common.precision.empty() && use_double(o.common.precision) != file_double)
    fail_config("--precision " + o.common.precision + " does not match the checkpoint");
  return file_double;
}

template <class T>
san::Dataset<T> obtain_dataset(const Options& o, const san::TrainConfig& cfg) {
  if (!o.data_dir.empty()) return san::load_dataset<T>(o.data_dir);
  return san::make_dataset<T>(cfg.data);
}

template <class T>
const std::vector<san::Frame<T>>& pick_split(const san::Dataset<T>& data, const std::string& split) {
  if (split == "val") return data.val;
  if (split == "train") return data.train;
  fail_config("--split must be train or val");
  return data.val;
}

san::EvalMode parse_mode(const std::string& mode) {
  if (mode == "prediction") return san::EvalMode::Prediction;
  if (mode == "completion") return san::EvalMode::Completion;
  fail_config("--mode must be prediction or completion");
  return san::EvalMode::Prediction;
}

int cmd_gen_data(const Options& o) {
  const san::TrainConfig cfg = build_config(o.common);
  if (o.common.out.empty()) fail_config("gen-data needs --out <dir>");
  auto write = [&](auto tag) {
    using T = decltype(tag);
    san::save_dataset(san::make_dataset<T>(cfg.data), o.common.out);
  };
  use_double(o.common.precision) ? write(double{}) : write(float{});
  emit((fs::path(o.common.out) / "config.txt").string(), cfg.to_text());
  std::cout << "wrote " << cfg.data.train_frames << " train and " << cfg.data.val_frames << " val frames to "
            << o.common.out << "\n";
  return kExitOk;
}

template <class T>
int train_impl(const Options& o, const san::TrainConfig& cfg) {
  const fs::path dir = o.common.out;
  std::optional<san::Checkpoint<T>> resume;
  if (!o.resume.empty()) {
    resume = san::load_checkpoint<T>(o.resume);
    if (!(resume->config == cfg)) fail_config("--resume checkpoint was trained with a different configuration");
  }
  const auto data = obtain_dataset<T>(o, cfg);
  fs::create_directories(dir);
  emit((dir / "config.txt").string(), cfg.to_text());

  auto csv = open_out(dir / "metrics.csv");
  csv << san::EpochLog::csv_header() << "\n";
  san::TrainHooks<T> hooks;
  hooks.on_log = [&](const san::EpochLog& log) {
    csv << log.csv_row() << "\n";
    csv.flush();
    std::cout << log.csv_row() << "\n" << std::flush;
  };
  hooks.on_stage_boundary = [&](const san::Checkpoint<T>& ckpt) { san::save_checkpoint(ckpt, dir / "stage1.ckpt"); };

  const auto ckpt = san::train<T>(cfg, data, hooks, std::move(resume), o.stop_after);
  san::save_checkpoint(ckpt, dir / "model.ckpt");
  std::cout << "checkpoint " << (dir / "model.ckpt").string() << " after " << ckpt.epochs_done << " epochs\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const san::TrainConfig cfg = build_config(o.common);
  if (o.common.out.empty()) fail_config("train needs --out <dir>");
  if (o.stop_after && *o.stop_after < 0) fail_config("--stop-after must be >= 0");
  return use_double(o.common.precision) ? train_impl<double>(o, cfg) : train_impl<float>(o, cfg);
}

/// Checkpoint config plus --config/--seed/--set overrides for evaluation.
san::TrainConfig eval_config(const san::TrainConfig& stored, const Common& c) {
  if (!c.config_path.empty()) return build_config(c);
  san::TrainConfig cfg = stored;
  if (c.seed) cfg.data.seed = *c.seed;
  cfg.apply(parse_overrides(c.overrides));
  cfg.validate();
  return cfg;
}

template <class T>
int eval_impl(const Options& o) {
  auto ckpt = san::load_checkpoint<T>(o.checkpoint);
  const san::TrainConfig cfg = eval_config(ckpt.config, o.common);
  const san::EvalMode mode = parse_mode(o.mode);
  const double sparsity = o.sparsity.value_or(cfg.eval_sparsity);
  if (sparsity < 0 || sparsity > 1) fail_config("--sparsity must lie in [0, 1]");
  const auto data = obtain_dataset<T>(o, cfg);
  const auto report = san::evaluate(ckpt, pick_split(data, o.split), mode, sparsity, cfg.eval_seed, cfg.eval_cap);
  emit(o.common.out, san::MetricReport::csv_header() + "\n" + report.csv_row() + "\n");
  return kExitOk;
}

int cmd_eval(const Options& o) { return checkpoint_double(o) ? eval_impl<double>(o) : eval_impl<float>(o); }

template <class T>
int sweep_impl(const Options& o) {
  auto ckpt = san::load_checkpoint<T>(o.checkpoint);
  const san::TrainConfig cfg = eval_config(ckpt.config, o.common);
  for (double level : o.levels)
    if (level < 0 || level > 1) fail_config("sweep levels must lie in [0, 1]");
  const auto data = obtain_dataset<T>(o, cfg);
  const auto rows = san::sparsity_sweep(ckpt, pick_split(data, o.split), o.levels, cfg.eval_seed, cfg.eval_cap);
  emit(o.common.out, san::sweep_csv(rows));
  return kExitOk;
}

int cmd_sweep(const Options& o) { return checkpoint_double(o) ? sweep_impl<double>(o) : sweep_impl<float>(o); }

template <class T>
int infer_impl(const Options& o, bool completion) {
  if (o.rgb.empty()) fail_config("--rgb is required");
  if (completion && o.sparse.empty()) fail_config("complete needs --sparse");
  if (o.common.out.empty()) fail_config("--out <file> is required");
  auto ckpt = san::load_checkpoint<T>(o.checkpoint);
  const san::DepthNet<T> net(ckpt.config.model);
  const auto image = san::from_raster<T>(san::read_dmap(o.rgb));
  net.check_image(image);
  san::DepthMap<T> depth;
  if (completion) {
    const auto sparse = san::from_raster<T>(san::read_dmap(o.sparse));
    depth = net.complete(ckpt.params, image, sparse);
  } else {
    depth = net.predict(ckpt.params, image);
  }
  auto out = open_out(o.common.out);
  san::write_dmap(san::to_raster(depth), out);
  return kExitOk;
}

int cmd_infer(const Options& o, bool completion) {
  return checkpoint_double(o) ? infer_impl<double>(o, completion) : infer_impl<float>(o, completion);
}

int cmd_gradcheck(const Options& o) {
  if (!o.common.precision.empty() && o.common.precision != "f64")
    fail_config("gradcheck runs in f64 only");
  const auto rows = san::run_gradcheck(o.common.seed.value_or(1));
  std::ostringstream text;
  text << "op,max_rel_error,tolerance,pass\n";
  bool ok = true;
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e,%.0e,", r.max_rel_error, r.tolerance);
    text << r.op << "," << buf << (r.passed ? "yes" : "no") << "\n";
    ok = ok && r.passed;
  }
  emit(o.common.out, text.str());
  if (!ok) throw san::Error("gradient check failed for at least one op");
  return kExitOk;
}

template <class T>
int ablate_impl(const Options& o, const san::TrainConfig& base) {
  const auto data = obtain_dataset<T>(o, base);
  std::ostringstream table;
  table << "variant,pred_rmse,comp_rmse,pred_abs_rel,comp_abs_rel\n";
  for (const auto& [name, cfg] : san::ablation_grid(base)) {
    std::cerr << "ablate: training " << name << "\n";
    auto ckpt = san::train<T>(cfg, data);
    const auto pred = san::evaluate(ckpt, data.val, san::EvalMode::Prediction, 0.0, cfg.eval_seed, cfg.eval_cap);
    const auto comp =
        san::evaluate(ckpt, data.val, san::EvalMode::Completion, cfg.eval_sparsity, cfg.eval_seed, cfg.eval_cap);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), pred.rmse, comp.rmse, pred.abs_rel,
                  comp.abs_rel);
    table << buf;
  }
  emit(o.common.out, table.str());
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const san::TrainConfig base = build_config(o.common);
  return use_double(o.common.precision) ? ablate_impl<double>(o, base) : ablate_impl<float>(o, base);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Master seed (model and data)");
  sub->add_option("--out", c.out, "Output file or directory");
  sub->add_option("--precision", c.precision, "Value type")->check(CLI::IsMember({"f32", "f64"}));
  sub->add_option("--set", c.overrides, "Config override key=value (repeatable)");
}

int report_error(const char* kind, int code, const std::string& message) {
  const nlohmann::json line{{"error", kind}, {"exit_code", code}, {"message", message}};
  std::cerr << line.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse auxiliary depth network: data, training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset directory");
  add_common(gen, o.common);

  auto* train = app.add_subcommand("train", "Run the two-stage schedule");
  add_common(train, o.common);
  train->add_option("--data", o.data_dir, "Dataset directory (generated in memory if omitted)");
  train->add_option("--resume", o.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after", o.stop_after, "Stop once this many epochs are complete");

  auto* eval = app.add_subcommand("eval", "Mean metrics over a split");
  add_common(eval, o.common);
  eval->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data_dir, "Dataset directory");
  eval->add_option("--mode", o.mode)->check(CLI::IsMember({"prediction", "completion"}));
  eval->add_option("--sparsity", o.sparsity, "Fraction of valid pixels fed to completion");
  eval->add_option("--split", o.split)->check(CLI::IsMember({"train", "val"}));

  auto* predict = app.add_subcommand("predict", "Depth from one RGB raster");
  add_common(predict, o.common);
  predict->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  predict->add_option("--rgb", o.rgb)->required()->check(CLI::ExistingFile);

  auto* complete = app.add_subcommand("complete", "Depth from RGB plus sparse depth");
  add_common(complete, o.common);
  complete->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  complete->add_option("--rgb", o.rgb)->required()->check(CLI::ExistingFile);
  complete->add_option("--sparse", o.sparse)->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Completion metrics across input sparsity levels");
  add_common(sweep, o.common);
  sweep->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  sweep->add_option("--data", o.data_dir, "Dataset directory");
  sweep->add_option("--levels", o.levels)->delimiter(',');
  sweep->add_option("--split", o.split)->check(CLI::IsMember({"train", "val"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op");
  add_common(gradcheck, o.common);

  auto* ablate = app.add_subcommand("ablate", "Train the ablation grid and compare");
  add_common(ablate, o.common);
  ablate->add_option("--data", o.data_dir, "Dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", kExitConfig, e.what());
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*predict) return cmd_infer(o, false);
    if (*complete) return cmd_infer(o, true);
    if (*sweep) return cmd_sweep(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const san::ConfigError& e) {
    return report_error("config", kExitConfig, e.what());
  } catch (const std::exception& e) {
    return report_error("runtime", kExitRuntime, e.what());
  }
  return kExitRuntime;
}
