#include "san/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "san/errors.hpp"

namespace san {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(int(parse_int(key, trim(item))));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One row per config key: how to read it and how to print it.
struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SAN_INT(KEY, MEMBER)                                                                  \
  Field{KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = int(parse_int(KEY, v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.MEMBER); }}
#define SAN_U64(KEY, MEMBER)                                                             \
  Field{KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_u64(KEY, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.MEMBER); }}
#define SAN_DBL(KEY, MEMBER)                                                                \
  Field{KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); }, \
        [](const TrainConfig& c) { return fmt_double(c.MEMBER); }}
#define SAN_BOOL(KEY, MEMBER)                                                             \
  Field{KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }, \
        [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SAN_U64("seed", seed),
      SAN_U64("data_seed", data.seed),
      SAN_INT("train_frames", data.train_frames),
      SAN_INT("val_frames", data.val_frames),
      SAN_INT("width", data.scene.width),
      SAN_INT("height", data.scene.height),
      SAN_INT("min_objects", data.scene.min_objects),
      SAN_INT("max_objects", data.scene.max_objects),
      SAN_DBL("scene_depth_min", data.scene.depth_min),
      SAN_DBL("scene_depth_max", data.scene.depth_max),
      SAN_DBL("noise", data.scene.noise),
      SAN_DBL("invalid_fraction", data.scene.invalid_fraction),
      SAN_DBL("color_jitter", data.scene.color_jitter),
      SAN_DBL("object_jitter", data.scene.object_jitter),
      SAN_BOOL("sky", data.scene.sky),
      Field{"widths",
            [](TrainConfig& c, const std::string& v) { c.model.widths = parse_int_list("widths", v); },
            [](const TrainConfig& c) {
              std::string s;
              for (int w : c.model.widths) s += (s.empty() ? "" : ",") + std::to_string(w);
              return s;
            }},
      SAN_INT("srb_branches", model.srb_branches),
      SAN_BOOL("use_wb", model.use_wb),
      SAN_DBL("d_min", model.d_min),
      SAN_DBL("d_max", model.d_max),
      SAN_DBL("bn_eps", model.bn.eps),
      SAN_DBL("bn_momentum", model.bn.momentum),
      SAN_DBL("lr", optim.lr),
      SAN_DBL("beta1", optim.beta1),
      SAN_DBL("beta2", optim.beta2),
      SAN_DBL("adam_eps", optim.eps),
      SAN_DBL("weight_decay", optim.weight_decay),
      SAN_DBL("lr_decay_factor", optim.lr_decay_factor),
      SAN_INT("lr_decay_every", optim.lr_decay_every),
      SAN_BOOL("lr_decay_reset_stage2", lr_decay_reset_stage2),
      SAN_INT("stage1_epochs", stage1_epochs),
      SAN_INT("stage2_epochs", stage2_epochs),
      SAN_BOOL("joint", joint),
      SAN_BOOL("freeze_pred_encoder", freeze_pred_encoder),
      SAN_BOOL("freeze_pred_decoder", freeze_pred_decoder),
      SAN_INT("accum", accum),
      SAN_DBL("lambda", lambda),
      SAN_DBL("train_sparsity_min", train_sparsity_min),
      SAN_DBL("train_sparsity_max", train_sparsity_max),
      SAN_DBL("eval_sparsity", eval_sparsity),
      SAN_U64("eval_seed", eval_seed),
      SAN_DBL("eval_cap", eval_cap),
      SAN_INT("val_every", val_every),
  };
  return table;
}

#undef SAN_INT
#undef SAN_U64
#undef SAN_DBL
#undef SAN_BOOL

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("line " + std::to_string(lineno) + ": repeated key " + key);
  }
  return kv;
}

void TrainConfig::validate() const {
  model.validate();
  optim.validate();
  data.scene.validate(1 << model.scales());
  if (data.scene.depth_min <= model.d_min || data.scene.depth_max >= model.d_max) {
    throw ConfigError("scene depth range must lie inside (d_min, d_max)");
  }
  if (data.train_frames < 1 || data.val_frames < 0) throw ConfigError("need train_frames >= 1, val_frames >= 0");
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (accum < 1) throw ConfigError("accum must be >= 1");
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(train_sparsity_min >= 0 && train_sparsity_min <= train_sparsity_max && train_sparsity_max <= 1)) {
    throw ConfigError("need 0 <= train_sparsity_min <= train_sparsity_max <= 1");
  }
  if (!(eval_sparsity >= 0 && eval_sparsity <= 1)) throw ConfigError("eval_sparsity must lie in [0, 1]");
  if (!(eval_cap > 0)) throw ConfigError("eval_cap must be positive");
  if (val_every < 0) throw ConfigError("val_every must be nonnegative");
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const Field& f : fields()) {
      if (key == f.key) {
        f.set(*this, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  cfg.apply(parse_key_values(text));
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace san
