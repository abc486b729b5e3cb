#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/data.hpp"
#include "hpt/eval.hpp"
#include "hpt/io.hpp"
#include "hpt/trainer.hpp"

namespace hpt {

inline HptInit hpt_init_from_string(const std::string& s) {
  if (s == "vanilla") return HptInit::vanilla;
  if (s == "warmup_ema") return HptInit::warmup_ema;
  throw ConfigError("unknown hpt_init '" + s + "' (expected vanilla or warmup_ema)");
}

/// Hidden layer widths of one model role.
struct ModelShape {
  std::vector<std::size_t> image_hidden;
  std::vector<std::size_t> text_hidden;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

enum class ModelRole { vanilla_target, proxy };

inline std::string to_string(ModelRole r) { return r == ModelRole::vanilla_target ? "vanilla_target" : "proxy"; }

inline ModelRole model_role_from_string(const std::string& s) {
  if (s == "vanilla_target" || s == "target") return ModelRole::vanilla_target;
  if (s == "proxy") return ModelRole::proxy;
  throw ConfigError("unknown model role '" + s + "' (expected vanilla_target or proxy)");
}

/// Everything one pipeline run needs. `seed` drives data generation, model
/// initialisation, batch order and attack restarts.
struct RunConfig {
  std::uint64_t seed = 42;
  SyntheticSpec data;
  std::size_t embed_dim = 32;
  Activation activation = Activation::relu;
  double temperature = kDefaultTemperature;
  ModelShape target{{64}, {64}};
  ModelShape proxy{{128, 128}, {128}};
  PretrainConfig pretrain;
  TrainConfig train;
  BoundLoss bound_loss = BoundLoss::l1_prob;
  std::string output_dir = "runs/default";

  ModelShape shape_of(ModelRole r) const { return r == ModelRole::vanilla_target ? target : proxy; }

  EncoderSpec image_spec(ModelRole r) const { return {data.input_dim(), shape_of(r).image_hidden, embed_dim, activation}; }
  EncoderSpec text_spec(ModelRole r) const { return {data.num_classes, shape_of(r).text_hidden, embed_dim, activation}; }

  std::uint64_t init_seed(ModelRole r) const { return seed * 2 + (r == ModelRole::proxy ? 1 : 0); }

  PretrainConfig pretrain_config(ModelRole r) const {
    PretrainConfig p = pretrain;
    p.seed = seed + (r == ModelRole::proxy ? 1 : 0);
    return p;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    hpt::validate(data);
    if (data.domains.empty()) throw ConfigError("data.domains must list at least one downstream domain");
    for (std::size_t i = 0; i < data.domains.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (data.domains[i].name == data.domains[j].name) {
          throw ConfigError("data.domains lists '" + data.domains[i].name + "' twice");
        }
    if (embed_dim == 0) throw ConfigError("model.embed_dim must be positive");
    if (!(temperature > 0.0)) throw ConfigError("model.temperature must be positive");
    for (const ModelShape* s : {&target, &proxy}) {
      for (auto h : s->image_hidden)
        if (h == 0) throw ConfigError("model hidden widths must be positive");
      for (auto h : s->text_hidden)
        if (h == 0) throw ConfigError("model hidden widths must be positive");
    }
    if (pretrain.batch_size == 0) throw ConfigError("pretrain.batch_size must be positive");
    if (!(pretrain.lr >= 0.0)) throw ConfigError("pretrain.lr must be >= 0");
    train.validate();
    if (output_dir.empty()) throw ConfigError("output.dir must be non-empty");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline double parse_plain_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) throw ConfigError("not a finite number");
  return v;
}

template <class T>
T parse_value(const std::string& s);

/// Accepts plain numbers and fractions such as 1/255.
template <>
inline double parse_value<double>(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return parse_plain_double(s);
  const double den = parse_plain_double(trim(s.substr(slash + 1)));
  if (den == 0.0) throw ConfigError("division by zero");
  return parse_plain_double(trim(s.substr(0, slash))) / den;
}

template <>
inline std::uint64_t parse_value<std::uint64_t>(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("not a non-negative integer");
  return v;
}

template <>
inline bool parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false");
}

template <>
inline std::string parse_value<std::string>(const std::string& s) {
  return s;
}

template <>
inline std::vector<std::size_t> parse_value<std::vector<std::size_t>>(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty() || s == "none") return out;
  for (const auto& part : split(s, ',')) out.push_back(parse_value<std::uint64_t>(part));
  return out;
}

template <>
inline std::optional<std::uint64_t> parse_value<std::optional<std::uint64_t>>(const std::string& s) {
  if (s == "none") return std::nullopt;
  return parse_value<std::uint64_t>(s);
}

template <>
inline std::optional<double> parse_value<std::optional<double>>(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return parse_value<double>(s);
}

template <>
inline Activation parse_value<Activation>(const std::string& s) {
  return activation_from_string(s);
}

template <>
inline HptInit parse_value<HptInit>(const std::string& s) {
  return hpt_init_from_string(s);
}

template <>
inline BoundLoss parse_value<BoundLoss>(const std::string& s) {
  return bound_loss_from_string(s);
}

inline std::string format_value(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
inline std::string format_value(std::uint64_t v) { return std::to_string(v); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(Activation v) { return to_string(v); }
inline std::string format_value(HptInit v) { return to_string(v); }
inline std::string format_value(BoundLoss v) { return to_string(v); }
inline std::string format_value(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : "none"; }
inline std::string format_value(const std::optional<double>& v) { return v ? format_value(*v) : "auto"; }
inline std::string format_value(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct KeyDef {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// `access` maps a config to the field behind the key; `check` validates a parsed value.
template <class T, class Access>
KeyDef bind_key(std::string key, Access access, std::function<void(const T&)> check = {}) {
  KeyDef def;
  def.key = key;
  def.set = [access, check](RunConfig& c, const std::string& text) {
    T v = parse_value<T>(text);
    if (check) check(v);
    access(c) = v;
  };
  def.get = [access](const RunConfig& c) { return format_value(access(const_cast<RunConfig&>(c))); };
  return def;
}

inline std::function<void(const double&)> in_unit() {
  return [](const double& v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(concat("value ", v, " outside [0, 1]"));
  };
}

inline std::function<void(const double&)> non_negative() {
  return [](const double& v) {
    if (!(v >= 0.0)) throw ConfigError(concat("value ", v, " must be >= 0"));
  };
}

inline std::function<void(const std::uint64_t&)> positive() {
  return [](const std::uint64_t& v) {
    if (v == 0) throw ConfigError("value must be positive");
  };
}

inline void attack_keys(std::vector<KeyDef>& keys, const std::string& prefix, AttackConfig TrainConfig::*member) {
  auto at = [member](RunConfig& c) -> AttackConfig& { return c.train.*member; };
  keys.push_back(bind_key<double>(prefix + ".epsilon", [at](RunConfig& c) -> double& { return at(c).epsilon; },
                                  non_negative()));
  keys.push_back(bind_key<std::uint64_t>(prefix + ".steps",
                                         [at](RunConfig& c) -> std::size_t& { return at(c).steps; }));
  keys.push_back(bind_key<std::optional<double>>(
      prefix + ".step_size", [at](RunConfig& c) -> std::optional<double>& { return at(c).step_size; },
      [](const std::optional<double>& v) {
        if (v && !(*v > 0.0)) throw ConfigError("step_size must be positive or auto");
      }));
  keys.push_back(bind_key<double>(prefix + ".clamp_min", [at](RunConfig& c) -> double& { return at(c).clamp_min; }));
  keys.push_back(bind_key<double>(prefix + ".clamp_max", [at](RunConfig& c) -> double& { return at(c).clamp_max; }));
  keys.push_back(bind_key<std::uint64_t>(prefix + ".restarts",
                                         [at](RunConfig& c) -> std::size_t& { return at(c).restarts; }));
  keys.push_back(bind_key<std::uint64_t>(prefix + ".restart_seed",
                                         [at](RunConfig& c) -> std::uint64_t& { return at(c).restart_seed; }));
}

inline std::vector<KeyDef> config_keys(const std::vector<std::string>& domain_names) {
  using std::uint64_t;
  std::vector<KeyDef> k;
  k.push_back(bind_key<uint64_t>("seed", [](RunConfig& c) -> uint64_t& { return c.seed; }));

  k.push_back(bind_key<uint64_t>("data.num_classes", [](RunConfig& c) -> std::size_t& { return c.data.num_classes; },
                                 [](const uint64_t& v) {
                                   if (v < 2) throw ConfigError("need at least two classes");
                                 }));
  k.push_back(bind_key<uint64_t>("data.side", [](RunConfig& c) -> std::size_t& { return c.data.side; }, positive()));
  k.push_back(bind_key<uint64_t>("data.train_per_class",
                                 [](RunConfig& c) -> std::size_t& { return c.data.train_per_class; }, positive()));
  k.push_back(bind_key<uint64_t>("data.test_per_class",
                                 [](RunConfig& c) -> std::size_t& { return c.data.test_per_class; }, positive()));
  k.push_back(bind_key<double>("data.noise_sigma", [](RunConfig& c) -> double& { return c.data.noise_sigma; },
                               non_negative()));
  k.push_back(bind_key<double>("data.prototype_contrast",
                               [](RunConfig& c) -> double& { return c.data.prototype_contrast; }, non_negative()));
  k.push_back(bind_key<double>("data.base_spread", [](RunConfig& c) -> double& { return c.data.base_spread; },
                               non_negative()));
  for (std::size_t i = 0; i < domain_names.size(); ++i) {
    const std::string p = "domain." + domain_names[i];
    k.push_back(bind_key<double>(p + ".jitter",
                                 [i](RunConfig& c) -> double& { return c.data.domains[i].prototype_jitter; },
                                 non_negative()));
    k.push_back(bind_key<double>(p + ".brightness",
                                 [i](RunConfig& c) -> double& { return c.data.domains[i].brightness_offset; }));
    k.push_back(bind_key<std::optional<uint64_t>>(
        p + ".permutation_seed",
        [i](RunConfig& c) -> std::optional<uint64_t>& { return c.data.domains[i].pixel_permutation_seed; }));
  }

  k.push_back(bind_key<uint64_t>("model.embed_dim", [](RunConfig& c) -> std::size_t& { return c.embed_dim; },
                                 positive()));
  k.push_back(bind_key<Activation>("model.activation", [](RunConfig& c) -> Activation& { return c.activation; }));
  k.push_back(bind_key<double>("model.temperature", [](RunConfig& c) -> double& { return c.temperature; },
                               [](const double& v) {
                                 if (!(v > 0.0)) throw ConfigError("temperature must be positive");
                               }));
  using Widths = std::vector<std::size_t>;
  k.push_back(bind_key<Widths>("model.target.image_hidden",
                               [](RunConfig& c) -> Widths& { return c.target.image_hidden; }));
  k.push_back(bind_key<Widths>("model.target.text_hidden", [](RunConfig& c) -> Widths& { return c.target.text_hidden; }));
  k.push_back(bind_key<Widths>("model.proxy.image_hidden", [](RunConfig& c) -> Widths& { return c.proxy.image_hidden; }));
  k.push_back(bind_key<Widths>("model.proxy.text_hidden", [](RunConfig& c) -> Widths& { return c.proxy.text_hidden; }));

  k.push_back(bind_key<uint64_t>("pretrain.epochs", [](RunConfig& c) -> std::size_t& { return c.pretrain.epochs; }));
  k.push_back(bind_key<double>("pretrain.lr", [](RunConfig& c) -> double& { return c.pretrain.lr; }, non_negative()));
  k.push_back(bind_key<uint64_t>("pretrain.batch_size",
                                 [](RunConfig& c) -> std::size_t& { return c.pretrain.batch_size; }, positive()));

  k.push_back(bind_key<double>("train.warmup_lr", [](RunConfig& c) -> double& { return c.train.warmup_lr; },
                               non_negative()));
  k.push_back(bind_key<double>("train.hpt_lr", [](RunConfig& c) -> double& { return c.train.hpt_lr; }, non_negative()));
  k.push_back(bind_key<double>("train.baseline_lr", [](RunConfig& c) -> double& { return c.train.baseline_lr; },
                               non_negative()));
  k.push_back(bind_key<uint64_t>("train.warmup_epochs",
                                 [](RunConfig& c) -> std::size_t& { return c.train.warmup_epochs; }));
  k.push_back(bind_key<uint64_t>("train.hpt_epochs", [](RunConfig& c) -> std::size_t& { return c.train.hpt_epochs; }));
  k.push_back(bind_key<uint64_t>("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; },
                                 positive()));
  k.push_back(bind_key<double>("train.gamma", [](RunConfig& c) -> double& { return c.train.gamma; }, in_unit()));
  k.push_back(bind_key<double>("train.beta", [](RunConfig& c) -> double& { return c.train.beta; }, in_unit()));
  k.push_back(bind_key<double>("train.ard_alpha", [](RunConfig& c) -> double& { return c.train.ard_alpha; }, in_unit()));
  k.push_back(bind_key<bool>("train.freeze_text", [](RunConfig& c) -> bool& { return c.train.freeze_text; }));
  k.push_back(bind_key<HptInit>("train.hpt_init", [](RunConfig& c) -> HptInit& { return c.train.hpt_init; }));
  k.push_back(bind_key<uint64_t>("train.monitor_samples",
                                 [](RunConfig& c) -> std::size_t& { return c.train.monitor_samples; }, positive()));

  attack_keys(k, "attack.train", &TrainConfig::train_attack);
  attack_keys(k, "attack.eval", &TrainConfig::eval_attack);

  k.push_back(bind_key<BoundLoss>("eval.bound_loss", [](RunConfig& c) -> BoundLoss& { return c.bound_loss; }));
  k.push_back(bind_key<std::string>("output.dir", [](RunConfig& c) -> std::string& { return c.output_dir; },
                                    [](const std::string& v) {
                                      if (v.empty()) throw ConfigError("output.dir must be non-empty");
                                    }));
  return k;
}

inline std::vector<std::string> domain_names(const SyntheticSpec& spec) {
  std::vector<std::string> names;
  for (const auto& d : spec.domains) names.push_back(d.name);
  return names;
}

}  // namespace detail

/// Parses flat `key = value` text. `#` starts a comment; absent keys keep their defaults.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "config") {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::string> order;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(detail::concat(source, ":", line, ": expected 'key = value', got '", body, "'"));
    }
    const std::string key = detail::trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(detail::concat(source, ":", line, ": empty key"));
    if (entries.count(key)) {
      throw ConfigError(detail::concat(source, ":", line, ": key '", key, "' repeats line ", entries[key].line));
    }
    entries[key] = {detail::trim(body.substr(eq + 1)), line};
    order.push_back(key);
  }

  RunConfig cfg;
  if (auto it = entries.find("data.domains"); it != entries.end()) {
    std::vector<DomainShift> domains;
    for (const auto& name : detail::split(it->second.value, ',')) {
      if (name.empty() || name.find('.') != std::string::npos) {
        throw ConfigError(detail::concat(source, ":", it->second.line, ": key 'data.domains': bad domain name '", name,
                                         "'"));
      }
      auto existing = std::find_if(cfg.data.domains.begin(), cfg.data.domains.end(),
                                   [&](const DomainShift& d) { return d.name == name; });
      domains.push_back(existing != cfg.data.domains.end() ? *existing : DomainShift{name, 0.0, 0.0, std::nullopt});
    }
    cfg.data.domains = std::move(domains);
  }

  const auto keys = detail::config_keys(detail::domain_names(cfg.data));
  for (const auto& key : order) {
    if (key == "data.domains") continue;
    const Entry& e = entries[key];
    auto def = std::find_if(keys.begin(), keys.end(), [&](const detail::KeyDef& d) { return d.key == key; });
    if (def == keys.end()) throw ConfigError(detail::concat(source, ":", e.line, ": unknown key '", key, "'"));
    try {
      def->set(cfg, e.value);
    } catch (const Error& err) {
      throw ConfigError(detail::concat(source, ":", e.line, ": key '", key, "' = '", e.value, "': ", err.what()));
    }
  }
  try {
    cfg.validate();
  } catch (const Error& err) {
    throw ConfigError(source + ": " + err.what());
  }
  return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.string());
}

/// Every key with its current value, one per line, in a fixed order.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out = "data.domains = ";
  const auto names = detail::domain_names(cfg.data);
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
  out += '\n';
  for (const auto& def : detail::config_keys(names)) out += def.key + " = " + def.get(cfg) + '\n';
  return out;
}

}  // namespace hpt
