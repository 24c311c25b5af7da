#pragma once

// Run configuration: a small TOML subset (top-level keys, [section] headers,
// `key = value` with strings, integers, reals and booleans, `#` comments),
// command-line overrides of the form `section.key=value`, and a canonical
// resolved dump.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "acsloc/data.hpp"
#include "acsloc/localization.hpp"
#include "acsloc/training.hpp"

namespace acsloc {

struct ConfigFileError : ConfigError {
  using ConfigError::ConfigError;
};

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out = "run";
  std::string dataset;  // directory holding manifest.json; empty means `out`
  SynthSpec synth;
  TrainConfig train;    // train.model carries the model section
  int variant = 4;
  double nms_tiou = 0.5;
  std::string grid = "thumos";
  std::string split = "test";

  fs::path out_dir() const { return fs::path(out); }
  fs::path dataset_dir() const { return dataset.empty() ? out_dir() : fs::path(dataset); }

  SynthSpec synth_spec() const {
    SynthSpec s = synth;
    s.seed = seed;
    return s;
  }

  /// Training configuration for a manifest with N classes and D features.
  TrainConfig train_config(std::size_t num_classes, std::size_t feature_dim) const {
    TrainConfig t = train;
    t.seed = seed;
    t.model.num_classes = num_classes;
    t.model.feature_dim = feature_dim;
    return t;
  }

  VariantConfig variant_config() const { return variant_preset(variant, nms_tiou); }

  void validate() const {
    if (out.empty()) throw ConfigError("out must not be empty");
    synth_spec().validate();
    train_config(synth.num_classes, synth.feature_dim).validate();
    variant_config().validate();
    grid_by_name(grid);
    if (split != "train" && split != "test") throw ConfigError("eval.split must be train or test");
  }
};

namespace detail {

enum class KeyKind { Bool, UInt, Int, Real, String };

struct KeyBinding {
  std::string name;
  KeyKind kind;
  std::function<void(RunConfig&, const ConfigValue&)> set;
  std::function<ConfigValue(const RunConfig&)> get;
};

template <class Proj>
KeyBinding bind_with(std::string name, KeyKind kind, Proj proj) {
  return {std::move(name), kind,
          [proj](RunConfig& c, const ConfigValue& v) {
            auto& field = proj(c);
            using F = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_same_v<F, std::string> || std::is_same_v<F, bool>) {
              field = std::get<F>(v);
            } else if constexpr (std::is_floating_point_v<F>) {
              field = std::holds_alternative<double>(v) ? std::get<double>(v)
                                                        : static_cast<double>(std::get<std::int64_t>(v));
            } else {
              field = static_cast<F>(std::get<std::int64_t>(v));
            }
          },
          [kind, proj](const RunConfig& c) -> ConfigValue {
            auto& field = proj(const_cast<RunConfig&>(c));
            using F = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_same_v<F, std::string>) {
              return field;
            } else if constexpr (std::is_same_v<F, bool>) {
              return field;
            } else {
              if (kind == KeyKind::Real) return static_cast<double>(field);
              return static_cast<std::int64_t>(field);
            }
          }};
}

#define ACSLOC_KEY(name, kind, expr) \
  bind_with(name, KeyKind::kind, [](RunConfig& c) -> auto& { return expr; })

inline const std::vector<KeyBinding>& key_bindings() {
  static const std::vector<KeyBinding> keys = {
      ACSLOC_KEY("seed", UInt, c.seed),
      ACSLOC_KEY("out", String, c.out),
      ACSLOC_KEY("dataset", String, c.dataset),
      ACSLOC_KEY("synth.num_classes", UInt, c.synth.num_classes),
      ACSLOC_KEY("synth.feature_dim", UInt, c.synth.feature_dim),
      ACSLOC_KEY("synth.train_videos", UInt, c.synth.train_videos),
      ACSLOC_KEY("synth.test_videos", UInt, c.synth.test_videos),
      ACSLOC_KEY("synth.t_min", UInt, c.synth.t_min),
      ACSLOC_KEY("synth.t_max", UInt, c.synth.t_max),
      ACSLOC_KEY("synth.action_scale", Real, c.synth.action_scale),
      ACSLOC_KEY("synth.context_scale", Real, c.synth.context_scale),
      ACSLOC_KEY("synth.background_scale", Real, c.synth.background_scale),
      ACSLOC_KEY("synth.noise", Real, c.synth.noise),
      ACSLOC_KEY("synth.context_min", UInt, c.synth.context_min),
      ACSLOC_KEY("synth.context_max", UInt, c.synth.context_max),
      ACSLOC_KEY("synth.background_fraction", Real, c.synth.background_fraction),
      ACSLOC_KEY("synth.two_class_prob", Real, c.synth.two_class_prob),
      ACSLOC_KEY("model.hidden", UInt, c.train.model.hidden),
      ACSLOC_KEY("model.kernel_size", UInt, c.train.model.kernel_size),
      ACSLOC_KEY("model.alpha", Real, c.train.model.alpha),
      ACSLOC_KEY("model.theta_h", Real, c.train.model.theta_h),
      ACSLOC_KEY("model.theta_l", Real, c.train.model.theta_l),
      ACSLOC_KEY("train.epochs", UInt, c.train.epochs),
      ACSLOC_KEY("train.batch_size", UInt, c.train.batch_size),
      ACSLOC_KEY("train.learning_rate", Real, c.train.learning_rate),
      ACSLOC_KEY("train.lambda", Real, c.train.lambda),
      ACSLOC_KEY("train.checkpoint_interval", UInt, c.train.checkpoint_interval),
      ACSLOC_KEY("train.fb_warmup_epochs", UInt, c.train.fb_warmup_epochs),
      ACSLOC_KEY("train.use_fb_loss", Bool, c.train.use_fb_loss),
      ACSLOC_KEY("train.use_ac_loss", Bool, c.train.use_ac_loss),
      ACSLOC_KEY("train.use_guidance_loss", Bool, c.train.use_guidance_loss),
      ACSLOC_KEY("train.use_mse_loss", Bool, c.train.use_mse_loss),
      ACSLOC_KEY("localize.variant", Int, c.variant),
      ACSLOC_KEY("localize.nms_tiou", Real, c.nms_tiou),
      ACSLOC_KEY("eval.grid", String, c.grid),
      ACSLOC_KEY("eval.split", String, c.split),
  };
  return keys;
}

#undef ACSLOC_KEY

inline const KeyBinding& find_key(const std::string& name) {
  for (const auto& k : key_bindings()) {
    if (k.name == name) return k;
  }
  throw ConfigFileError("unknown config key '" + name + "'");
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

/// Drops a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::string parse_string_literal(const std::string& s, const std::string& where) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') {
    throw ConfigFileError(where + ": malformed string " + s);
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] != '\\') {
      if (s[i] == '"') throw ConfigFileError(where + ": stray quote in " + s);
      out.push_back(s[i]);
      continue;
    }
    if (++i + 1 >= s.size()) throw ConfigFileError(where + ": dangling escape in " + s);
    switch (s[i]) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      default: throw ConfigFileError(where + ": unsupported escape in " + s);
    }
  }
  return out;
}

/// Parses a scalar literal. With `bare_strings`, anything that is not a
/// number or boolean is taken as a string (command-line convenience).
inline ConfigValue parse_value(const std::string& raw, const std::string& where, bool bare_strings) {
  const std::string s = trim(raw);
  if (s.empty()) throw ConfigFileError(where + ": missing value");
  if (s.front() == '"') return parse_string_literal(s, where);
  if (s == "true") return true;
  if (s == "false") return false;
  std::int64_t iv = 0;
  auto [ip, iec] = std::from_chars(s.data(), s.data() + s.size(), iv);
  if (iec == std::errc() && ip == s.data() + s.size()) return iv;
  double dv = 0.0;
  auto [dp, dec] = std::from_chars(s.data(), s.data() + s.size(), dv);
  if (dec == std::errc() && dp == s.data() + s.size()) return dv;
  if (bare_strings) return s;
  throw ConfigFileError(where + ": cannot parse value '" + s + "'");
}

inline void assign(RunConfig& cfg, const std::string& key, const ConfigValue& v, const std::string& where) {
  const auto& binding = find_key(key);
  const bool ok = [&] {
    switch (binding.kind) {
      case KeyKind::Bool: return std::holds_alternative<bool>(v);
      case KeyKind::UInt:
        return std::holds_alternative<std::int64_t>(v) && std::get<std::int64_t>(v) >= 0;
      case KeyKind::Int: return std::holds_alternative<std::int64_t>(v);
      case KeyKind::Real:
        return std::holds_alternative<double>(v) || std::holds_alternative<std::int64_t>(v);
      case KeyKind::String: return std::holds_alternative<std::string>(v);
    }
    return false;
  }();
  if (!ok) throw ConfigFileError(where + ": wrong value type for '" + key + "'");
  binding.set(cfg, v);
}

}  // namespace detail

/// Applies a config document on top of `cfg`.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigFileError(where + ": malformed section header");
      section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
      if (section != "synth" && section != "model" && section != "train" && section != "localize" &&
          section != "eval") {
        throw ConfigFileError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigFileError(where + ": expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!seen.insert(full).second) throw ConfigFileError(where + ": duplicate key '" + full + "'");
    detail::assign(cfg, full, detail::parse_value(body.substr(eq + 1), where, false), where);
  }
}

/// Applies `section.key=value` overrides in order.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigFileError("override '" + o + "' is not key=value");
    const std::string key = detail::trim(std::string_view(o).substr(0, eq));
    detail::assign(cfg, key, detail::parse_value(o.substr(eq + 1), "override " + key, true), "override " + key);
  }
}

inline RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  if (!fs::exists(path)) throw MissingFileError("missing config " + path.string());
  RunConfig cfg;
  apply_config_text(cfg, detail::read_file(path), path.string());
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

/// Canonical document: every key, fixed order, full-precision reals.
inline std::string resolved_config_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& k : detail::key_bindings()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    const ConfigValue v = k.get(cfg);
    std::string text;
    if (const auto* b = std::get_if<bool>(&v)) {
      text = *b ? "true" : "false";
    } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
      text = std::to_string(*i);
    } else if (const auto* d = std::get_if<double>(&v)) {
      text = format_double(*d);
      if (text.find_first_of(".eE") == std::string::npos && text.find_first_of("ni") == std::string::npos) {
        text += ".0";
      }
    } else {
      text = "\"";
      for (char ch : std::get<std::string>(v)) {
        if (ch == '"' || ch == '\\') text.push_back('\\');
        text.push_back(ch);
      }
      text += "\"";
    }
    out += key + " = " + text + "\n";
  }
  return out;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : detail::key_bindings()) out.push_back(k.name);
  return out;
}

}  // namespace acsloc
