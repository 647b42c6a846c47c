// Copyright 2026 The lagdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: a flat `key = value` text format with
// `[section]` headers, its binding onto DynaConfig, and the canonical
// resolved dump whose git-style blob hash tags every output file.
//
//   # comment
//   [experiment]
//   variant = lnn-ekf
//   seeds = 0,1,2
//   [dyna]
//   episodes = 300

#pragma once

#include <openssl/evp.h>

#include <charconv>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lagdyna/dyna.hpp"
#include "lagdyna/errors.hpp"

namespace lagdyna {

class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& msg)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class Variant { kLnnAdam, kLnnEkf, kMfrl };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kLnnAdam: return "lnn-adam";
    case Variant::kLnnEkf: return "lnn-ekf";
    case Variant::kMfrl: return "mfrl";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "lnn-adam") return Variant::kLnnAdam;
  if (s == "lnn-ekf") return Variant::kLnnEkf;
  if (s == "mfrl") return Variant::kMfrl;
  throw DomainError("unknown variant '" + s + "' (expected lnn-adam, lnn-ekf or mfrl)");
}

/// Applies the variant's model settings to a Dyna configuration.
inline void apply_variant(DynaConfig& cfg, Variant v) {
  cfg.model_free = v == Variant::kMfrl;
  cfg.optimizer = v == Variant::kLnnEkf ? ModelOptimizer::kEkf : ModelOptimizer::kAdam;
}

struct ExperimentConfig {
  Variant variant = Variant::kLnnAdam;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "runs";
  /// Steps-to-threshold level used by `compare`.
  double threshold = -300.0;
  DynaConfig dyna;
};

/// Parsed `section.key -> (value, line)` pairs, before binding.
struct ConfigDocument {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> entries;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ConfigDocument parse_config_text(std::istream& is) {
  ConfigDocument doc;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(lineno, "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(lineno, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "empty key");
    if (section.empty()) throw ConfigError(lineno, "key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (doc.entries.count(full)) throw ConfigError(lineno, "duplicate key '" + full + "'");
    doc.entries[full] = {value, lineno};
  }
  return doc;
}

namespace detail {

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DomainError("'" + s + "' is not a valid number");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw DomainError("'" + s + "' is not a boolean (true/false)");
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(trim(item)));
  if (out.empty()) throw DomainError("empty list");
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// One bindable field: how to print it and how to set it from text.
struct Field {
  std::string key;
  bool required = false;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field number_field(std::string key, T DynaConfig::*member) {
  return {std::move(key), false,
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.dyna.*member);
            else return std::to_string(c.dyna.*member);
          },
          [member](ExperimentConfig& c, const std::string& v) { c.dyna.*member = parse_number<T>(v); }};
}

inline Field bool_field(std::string key, bool DynaConfig::*member) {
  return {std::move(key), false,
          [member](const ExperimentConfig& c) { return std::string(c.dyna.*member ? "true" : "false"); },
          [member](ExperimentConfig& c, const std::string& v) { c.dyna.*member = parse_bool(v); }};
}

template <class T, class S>
Field nested_field(std::string key, S DynaConfig::*outer, T S::*member) {
  return {std::move(key), false,
          [outer, member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.dyna.*outer.*member);
            else return std::to_string(c.dyna.*outer.*member);
          },
          [outer, member](ExperimentConfig& c, const std::string& v) {
            c.dyna.*outer.*member = parse_number<T>(v);
          }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"experiment.variant", true,
                 [](const ExperimentConfig& c) { return to_string(c.variant); },
                 [](ExperimentConfig& c, const std::string& v) { c.variant = variant_from_string(v); }});
    f.push_back({"experiment.seeds", true,
                 [](const ExperimentConfig& c) { return join(c.seeds); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds = parse_list<std::uint64_t>(v);
                 }});
    f.push_back({"experiment.out", false, [](const ExperimentConfig& c) { return c.out_dir; },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty()) throw DomainError("output directory must be nonempty");
                   c.out_dir = v;
                 }});
    f.push_back({"experiment.threshold", false,
                 [](const ExperimentConfig& c) { return fmt_double(c.threshold); },
                 [](ExperimentConfig& c, const std::string& v) { c.threshold = parse_number<double>(v); }});

    using D = DynaConfig;
    f.push_back(nested_field("env.mass", &D::env, &PendulumParams::mass));
    f.push_back(nested_field("env.length", &D::env, &PendulumParams::length));
    f.push_back(nested_field("env.gravity", &D::env, &PendulumParams::gravity));
    f.push_back(nested_field("env.dt", &D::env, &PendulumParams::dt));
    f.push_back(nested_field("env.torque_limit", &D::env, &PendulumParams::torque_limit));
    f.push_back(nested_field("env.speed_limit", &D::env, &PendulumParams::speed_limit));
    f.push_back(nested_field("env.horizon", &D::env, &PendulumParams::horizon));

    f.push_back(number_field("dyna.episodes", &D::episodes));
    f.push_back(number_field("dyna.steps_per_episode", &D::steps_per_episode));
    f.push_back(number_field("dyna.rollout_rounds", &D::rollout_rounds));
    f.push_back(number_field("dyna.rollout_batch", &D::rollout_batch));
    f.push_back(number_field("dyna.rollout_horizon", &D::rollout_horizon));
    f.push_back(number_field("dyna.env_threshold", &D::env_threshold));
    f.push_back(number_field("dyna.mod_threshold", &D::mod_threshold));
    f.push_back(number_field("dyna.data_loss_threshold", &D::data_loss_threshold));
    f.push_back(number_field("dyna.model_train_every", &D::model_train_every));
    f.push_back(bool_field("dyna.physical_loss", &D::physical_loss));
    f.push_back(number_field("dyna.physical_weight", &D::physical_weight));
    f.push_back(number_field("dyna.physical_batch", &D::physical_batch));
    f.push_back(number_field("dyna.physical_lr", &D::physical_lr));
    f.push_back(number_field("dyna.agent_updates", &D::agent_updates));
    f.push_back(number_field("dyna.planning_updates", &D::planning_updates));
    f.push_back(number_field("dyna.agent_batch", &D::agent_batch));
    f.push_back(number_field("dyna.random_episodes", &D::random_episodes));
    f.push_back(number_field("dyna.env_capacity", &D::env_capacity));
    f.push_back(number_field("dyna.mod_capacity", &D::mod_capacity));
    f.push_back(number_field("dyna.eval_every", &D::eval_every));
    f.push_back(number_field("dyna.eval_episodes", &D::eval_episodes));

    f.push_back({"model.hidden", false,
                 [](const ExperimentConfig& c) { return join(c.dyna.lnn_hidden); },
                 [](ExperimentConfig& c, const std::string& v) { c.dyna.lnn_hidden = parse_list<int>(v); }});
    f.push_back({"model.activation", false,
                 [](const ExperimentConfig& c) { return to_string(c.dyna.lnn_activation); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.dyna.lnn_activation = activation_from_string(v);
                 }});
    f.push_back(nested_field("model.init_mass", &D::lnn_init, &LagrangianInit::target_mass));
    f.push_back(number_field("model.samples", &D::model_samples));
    f.push_back(number_field("model.adam_epochs", &D::adam_epochs));
    f.push_back(number_field("model.adam_batch", &D::adam_batch));
    f.push_back(number_field("model.adam_lr", &D::adam_lr));
    f.push_back(number_field("model.adam_beta1", &D::adam_beta1));
    f.push_back(number_field("model.adam_beta2", &D::adam_beta2));
    f.push_back(number_field("model.adam_eps", &D::adam_eps));
    f.push_back(number_field("model.ekf_passes", &D::ekf_passes));
    f.push_back(number_field("model.ekf_p0", &D::ekf_p0));
    f.push_back(number_field("model.ekf_q", &D::ekf_q));
    f.push_back(number_field("model.ekf_r", &D::ekf_r));

    f.push_back({"agent.policy_hidden", false,
                 [](const ExperimentConfig& c) { return join(c.dyna.agent.policy_hidden); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.dyna.agent.policy_hidden = parse_list<int>(v);
                 }});
    f.push_back({"agent.critic_hidden", false,
                 [](const ExperimentConfig& c) { return join(c.dyna.agent.critic_hidden); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.dyna.agent.critic_hidden = parse_list<int>(v);
                 }});
    f.push_back({"agent.features", false,
                 [](const ExperimentConfig& c) {
                   return std::string(c.dyna.agent.features.kind == StateFeatures::kTrig ? "trig" : "scaled");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "trig") c.dyna.agent.features.kind = StateFeatures::kTrig;
                   else if (v == "scaled") c.dyna.agent.features.kind = StateFeatures::kScaled;
                   else throw DomainError("features must be 'trig' or 'scaled'");
                 }});
    f.push_back(nested_field("agent.actor_lr", &D::agent, &AgentConfig::actor_lr));
    f.push_back(nested_field("agent.critic_lr", &D::agent, &AgentConfig::critic_lr));
    f.push_back(nested_field("agent.gamma", &D::agent, &AgentConfig::gamma));
    f.push_back(nested_field("agent.init_log_std", &D::agent, &AgentConfig::init_log_std));
    f.push_back(nested_field("agent.target_period", &D::agent, &AgentConfig::target_period));
    f.push_back(nested_field("agent.mean_penalty", &D::agent, &AgentConfig::mean_penalty));
    f.push_back(nested_field("agent.actor_samples", &D::agent, &AgentConfig::actor_samples));
    return f;
  }();
  return table;
}

}  // namespace detail

/// Binds a parsed document. Unknown keys, bad values and missing required
/// keys raise ConfigError naming the key (and its line when it has one).
inline ExperimentConfig bind_config(const ConfigDocument& doc) {
  ExperimentConfig cfg;
  std::map<std::string, const detail::Field*> by_key;
  for (const auto& f : detail::fields()) by_key[f.key] = &f;
  for (const auto& [key, entry] : doc.entries) {
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(entry.line, "unknown key '" + key + "'");
    try {
      it->second->set(cfg, entry.value);
    } catch (const Error& e) {
      throw ConfigError(entry.line, key + ": " + e.what());
    }
  }
  for (const auto& f : detail::fields())
    if (f.required && !doc.entries.count(f.key))
      throw ConfigError(0, "missing required field '" + f.key + "'");
  try {
    apply_variant(cfg.dyna, cfg.variant);
    cfg.dyna.validate();
  } catch (const Error& e) {
    throw ConfigError(0, std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config(std::istream& is) { return bind_config(parse_config_text(is)); }

/// Every resolved value as `section.key=value`, one per line, sorted.
inline std::string resolved_dump(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& f : detail::fields()) kv[f.key] = f.get(cfg);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// Hex SHA-1 of "blob <len>\0<text>", the content address git gives a file.
inline std::string git_blob_hash(const std::string& text) {
  const std::string payload = "blob " + std::to_string(text.size()) + '\0' + text;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

/// Hash of the resolved configuration with the seed list and output
/// directory left out, so runs of one setting share it.
inline std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.seeds.clear();
  c.out_dir.clear();
  return git_blob_hash(resolved_dump(c));
}

}  // namespace lagdyna
