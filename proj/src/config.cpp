#include "minimax/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace minimax {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

struct Value {
  std::string raw;
  std::string where;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(where + ": " + what + " (got '" + raw + "')");
  }

  double real() const {
    double v = 0;
    const char* b = raw.data();
    const auto r = std::from_chars(b, b + raw.size(), v);
    if (r.ec != std::errc() || r.ptr != b + raw.size()) fail("expected a number");
    return v;
  }

  long long integer() const {
    long long v = 0;
    const char* b = raw.data();
    const auto r = std::from_chars(b, b + raw.size(), v);
    if (r.ec != std::errc() || r.ptr != b + raw.size()) fail("expected an integer");
    return v;
  }

  bool boolean() const {
    if (raw == "true") return true;
    if (raw == "false") return false;
    fail("expected true or false");
  }

  std::string text() const {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
      return raw.substr(1, raw.size() - 2);
    return raw;
  }

  std::vector<long long> integers() const {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') fail("expected a list");
    std::vector<long long> out;
    std::stringstream ss(raw.substr(1, raw.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(Value{item, where}.integer());
    }
    return out;
  }
};

using Setter = std::function<void(ExperimentConfig&, const Value&)>;

void set_depths(ExperimentConfig& c, const Value& v, bool lark) {
  const auto xs = v.integers();
  if (xs.size() != 3) v.fail("expected three stage depths");
  c.model.stage_depths.resize(3);
  for (int i = 0; i < 3; ++i) (lark ? c.model.stage_depths[i].lark : c.model.stage_depths[i].smak) = static_cast<int>(xs[i]);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.stage_channels",
       [](ExperimentConfig& c, const Value& v) {
         const auto xs = v.integers();
         if (xs.size() != 3) v.fail("expected three stage widths");
         c.model.stage_channels.assign(xs.begin(), xs.end());
       }},
      {"model.lark_depths", [](ExperimentConfig& c, const Value& v) { set_depths(c, v, true); }},
      {"model.smak_depths", [](ExperimentConfig& c, const Value& v) { set_depths(c, v, false); }},
      {"model.bottleneck_depth",
       [](ExperimentConfig& c, const Value& v) { c.model.bottleneck_depth = static_cast<int>(v.integer()); }},
      {"model.input_size",
       [](ExperimentConfig& c, const Value& v) { c.model.input_h = c.model.input_w = v.integer(); }},
      {"model.lark_kernel", [](ExperimentConfig& c, const Value& v) { c.model.lark_kernel = v.integer(); }},
      {"model.expansion", [](ExperimentConfig& c, const Value& v) { c.model.expansion = v.integer(); }},
      {"train.preset",
       [](ExperimentConfig& c, const Value& v) {
         const auto p = v.text();
         if (p == "fr") c.train.loss_mode = LossMode::Adc;
         else if (p == "fp") c.train.loss_mode = LossMode::Global;
         else v.fail("preset must be fr or fp");
       }},
      {"train.lr", [](ExperimentConfig& c, const Value& v) { c.train.lr = v.real(); }},
      {"train.beta1", [](ExperimentConfig& c, const Value& v) { c.train.beta1 = v.real(); }},
      {"train.beta2", [](ExperimentConfig& c, const Value& v) { c.train.beta2 = v.real(); }},
      {"train.adam_eps", [](ExperimentConfig& c, const Value& v) { c.train.adam_eps = v.real(); }},
      {"train.weight_decay", [](ExperimentConfig& c, const Value& v) { c.train.weight_decay = v.real(); }},
      {"train.lr_gamma", [](ExperimentConfig& c, const Value& v) { c.train.lr_gamma = v.real(); }},
      {"train.batch_size",
       [](ExperimentConfig& c, const Value& v) { c.train.batch_size = static_cast<int>(v.integer()); }},
      {"train.epochs", [](ExperimentConfig& c, const Value& v) { c.train.epochs = static_cast<int>(v.integer()); }},
      {"train.loss_mode",
       [](ExperimentConfig& c, const Value& v) {
         try {
           c.train.loss_mode = parse_loss_mode(v.text());
         } catch (const ConfigError&) {
           v.fail("loss_mode must be global, local, local_hm or adc");
         }
       }},
      {"train.p_hard", [](ExperimentConfig& c, const Value& v) { c.train.mining.p_hard = v.real(); }},
      {"train.p_lim", [](ExperimentConfig& c, const Value& v) { c.train.mining.p_lim = v.real(); }},
      {"train.alpha_on_squared",
       [](ExperimentConfig& c, const Value& v) { c.train.mining.alpha_on_squared = v.boolean(); }},
      {"train.seed",
       [](ExperimentConfig& c, const Value& v) {
         const auto s = v.integer();
         if (s < 0) v.fail("seed must be nonnegative");
         c.train.seed = static_cast<std::uint64_t>(s);
       }},
      {"train.log_diagnostics",
       [](ExperimentConfig& c, const Value& v) { c.train.log_diagnostics = v.boolean(); }},
      {"eval.smoothing_sigma", [](ExperimentConfig& c, const Value& v) { c.eval.smoothing_sigma = v.real(); }},
      {"eval.fpr_cap", [](ExperimentConfig& c, const Value& v) { c.eval.fpr_cap = v.real(); }},
      {"eval.connectivity",
       [](ExperimentConfig& c, const Value& v) {
         const auto k = v.integer();
         if (k != 4 && k != 8) v.fail("connectivity must be 4 or 8");
         c.eval.connectivity = k == 4 ? Connectivity::Four : Connectivity::Eight;
       }},
      {"eval.batch_size",
       [](ExperimentConfig& c, const Value& v) { c.eval.batch_size = static_cast<int>(v.integer()); }},
  };
  return table;
}

std::string list(const std::vector<long long>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + std::to_string(xs[i]);
  return s + "]";
}

std::string real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::Global: return "global";
    case LossMode::Local: return "local";
    case LossMode::LocalHardMined: return "local_hm";
    case LossMode::Adc: return "adc";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "global") return LossMode::Global;
  if (s == "local") return LossMode::Local;
  if (s == "local_hm") return LossMode::LocalHardMined;
  if (s == "adc") return LossMode::Adc;
  throw ConfigError("unknown loss mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(lr_gamma > 0)) throw ConfigError("lr_gamma must be positive");
  mining.validate();
}

void EvalConfig::validate() const {
  if (smoothing_sigma < 0) throw ConfigError("smoothing_sigma must be nonnegative");
  if (!(fpr_cap > 0 && fpr_cap <= 1)) throw ConfigError("fpr_cap must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("eval batch_size must be at least 1");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "eval")
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside a section");
      key = section + "." + key;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    it->second(cfg, Value{trim(line.substr(eq + 1)), where});
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const ExperimentConfig& c) {
  std::vector<long long> lark, smak;
  for (const auto& d : c.model.stage_depths) {
    lark.push_back(d.lark);
    smak.push_back(d.smak);
  }
  std::ostringstream o;
  o << "[model]\n"
    << "stage_channels = " << list({c.model.stage_channels.begin(), c.model.stage_channels.end()}) << "\n"
    << "lark_depths = " << list(lark) << "\n"
    << "smak_depths = " << list(smak) << "\n"
    << "bottleneck_depth = " << c.model.bottleneck_depth << "\n"
    << "input_size = " << c.model.input_h << "\n"
    << "lark_kernel = " << c.model.lark_kernel << "\n"
    << "expansion = " << c.model.expansion << "\n\n"
    << "[train]\n"
    << "lr = " << real(c.train.lr) << "\n"
    << "beta1 = " << real(c.train.beta1) << "\n"
    << "beta2 = " << real(c.train.beta2) << "\n"
    << "adam_eps = " << real(c.train.adam_eps) << "\n"
    << "weight_decay = " << real(c.train.weight_decay) << "\n"
    << "lr_gamma = " << real(c.train.lr_gamma) << "\n"
    << "batch_size = " << c.train.batch_size << "\n"
    << "epochs = " << c.train.epochs << "\n"
    << "loss_mode = \"" << to_string(c.train.loss_mode) << "\"\n"
    << "p_hard = " << real(c.train.mining.p_hard) << "\n"
    << "p_lim = " << real(c.train.mining.p_lim) << "\n"
    << "alpha_on_squared = " << (c.train.mining.alpha_on_squared ? "true" : "false") << "\n"
    << "seed = " << c.train.seed << "\n"
    << "log_diagnostics = " << (c.train.log_diagnostics ? "true" : "false") << "\n\n"
    << "[eval]\n"
    << "smoothing_sigma = " << real(c.eval.smoothing_sigma) << "\n"
    << "fpr_cap = " << real(c.eval.fpr_cap) << "\n"
    << "connectivity = " << static_cast<int>(c.eval.connectivity) << "\n"
    << "batch_size = " << c.eval.batch_size << "\n";
  return o.str();
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write config " + path.string());
  f << format_config(cfg);
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace minimax
