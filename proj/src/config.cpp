#include "ammrl/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string_view>

namespace ammrl::exp {
namespace {

using nlohmann::json;

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items()) {
    bool found = false;
    for (std::string_view k : known) found = found || k == key;
    if (!found) throw ConfigError(join_key(prefix, key), "unknown key");
  }
}

const json& object_at(const json& doc, const std::string& key) {
  if (!doc.is_object()) throw ConfigError(key, "expected an object");
  return doc;
}

double number_at(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(key, "expected a finite number");
  return x;
}

long long integer_at(const json& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x == std::floor(x)) return static_cast<long long>(x);
  }
  throw ConfigError(key, "expected an integer");
}

int int_at(const json& v, const std::string& key) {
  const long long x = integer_at(v, key);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(key, "integer out of range");
  return static_cast<int>(x);
}

std::uint64_t seed_at(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) {
    return static_cast<std::uint64_t>(v.get<long long>());
  }
  throw ConfigError(key, "expected a non-negative integer seed");
}

std::string string_at(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

sim::TruncatedNormal tolerance_at(const json& v, const std::string& key) {
  if (v.is_string()) {
    try {
      return sim::tolerance_distribution(parse_tolerance_mode(v.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  }
  object_at(v, key);
  reject_unknown(v, key, {"mu", "sigma", "lower", "upper"});
  sim::TruncatedNormal dist;
  for (const char* field : {"mu", "sigma", "lower", "upper"}) {
    if (!v.contains(field)) throw ConfigError(join_key(key, field), "missing");
  }
  dist.mu = number_at(v["mu"], join_key(key, "mu"));
  dist.sigma = number_at(v["sigma"], join_key(key, "sigma"));
  dist.lower = number_at(v["lower"], join_key(key, "lower"));
  dist.upper = number_at(v["upper"], join_key(key, "upper"));
  if (!(dist.sigma > 0.0)) throw ConfigError(join_key(key, "sigma"), "must be positive");
  if (!(dist.lower < dist.upper)) throw ConfigError(key, "lower must be below upper");
  return dist;
}

std::vector<double> current_sweep_values(const Scenario& s) {
  return is_sweep(s) ? sweep_values(s) : std::vector<double>{};
}

json tn_to_json(const sim::TruncatedNormal& d) {
  return {{"mu", d.mu}, {"sigma", d.sigma}, {"lower", d.lower}, {"upper", d.upper}};
}

}  // namespace

int profile_epochs(const std::string& profile) {
  if (profile == "desk") return kDeskEpochs;
  if (profile == "paper") return kPaperEpochs;
  throw std::invalid_argument("unknown profile '" + profile + "' (expected desk or paper)");
}

ToleranceMode parse_tolerance_mode(const std::string& name) {
  if (name == "normal") return ToleranceMode::Normal;
  if (name == "loose") return ToleranceMode::Loose;
  throw std::invalid_argument("unknown tolerance mode '" + name + "' (expected normal or loose)");
}

std::string to_string(ToleranceMode mode) {
  return mode == ToleranceMode::Loose ? "loose" : "normal";
}

Scenario make_scenario(const std::string& name, const std::vector<double>& values,
                       BehaviorChange change) {
  if (name == "normal") return NormalTolerance{};
  if (name == "loose") return LooseTolerance{};
  if (name == "high-liquidity") return HighLiquidity{};
  if (name == "behavior-change") return change;
  if (name == "swap-size") return SwapSizeSweep{values};
  if (name == "tolerance") return ToleranceSweep{values};
  if (name == "update-interval") {
    UpdateIntervalSweep s;
    for (double v : values) {
      if (v != std::floor(v) || v < 1.0 || v > 1e9) {
        throw std::invalid_argument("update intervals must be positive integers");
      }
      s.intervals.push_back(static_cast<int>(v));
    }
    return s;
  }
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

ExperimentConfig merge_config(ExperimentConfig config, const json& doc) {
  object_at(doc, "<root>");
  reject_unknown(doc, "",
                 {"profile", "scenario", "behavior_change", "sweep_values", "agent", "epochs",
                  "seeds", "seed", "update_interval", "hyperparams", "env"});

  if (doc.contains("profile")) {
    try {
      config.epochs = profile_epochs(string_at(doc["profile"], "profile"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("profile", e.what());
    }
  }

  if (doc.contains("scenario") || doc.contains("behavior_change") ||
      doc.contains("sweep_values")) {
    std::string name = scenario_name(config.scenario);
    if (doc.contains("scenario")) name = string_at(doc["scenario"], "scenario");

    BehaviorChange change;
    if (const auto* prior = std::get_if<BehaviorChange>(&config.scenario)) change = *prior;
    if (doc.contains("behavior_change")) {
      const json& bc = object_at(doc["behavior_change"], "behavior_change");
      reject_unknown(bc, "behavior_change", {"from", "to"});
      auto mode_at = [&](const char* field) {
        const std::string key = join_key("behavior_change", field);
        try {
          return parse_tolerance_mode(string_at(bc[field], key));
        } catch (const ConfigError&) {
          throw;
        } catch (const std::invalid_argument& e) {
          throw ConfigError(key, e.what());
        }
      };
      if (bc.contains("from")) change.from = mode_at("from");
      if (bc.contains("to")) change.to = mode_at("to");
    }

    std::vector<double> values = current_sweep_values(config.scenario);
    if (doc.contains("sweep_values")) {
      const json& list = doc["sweep_values"];
      if (!list.is_array()) throw ConfigError("sweep_values", "expected an array of numbers");
      values.clear();
      for (const json& v : list) values.push_back(number_at(v, "sweep_values"));
    }
    try {
      config.scenario = make_scenario(name, values, change);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(doc.contains("scenario") ? "scenario" : "sweep_values", e.what());
    }
    if (is_sweep(config.scenario) && values.empty()) {
      throw ConfigError("sweep_values", "a sweep scenario needs at least one value");
    }
  }

  if (doc.contains("agent")) {
    try {
      config.agent = rl::parse_agent_kind(string_at(doc["agent"], "agent"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("agent", e.what());
    }
  }
  if (doc.contains("epochs")) config.epochs = int_at(doc["epochs"], "epochs");
  if (doc.contains("seed") && doc.contains("seeds")) {
    throw ConfigError("seed", "give either seed or seeds, not both");
  }
  if (doc.contains("seed")) config.seeds = {seed_at(doc["seed"], "seed")};
  if (doc.contains("seeds")) {
    const json& list = doc["seeds"];
    if (!list.is_array()) throw ConfigError("seeds", "expected an array of integers");
    config.seeds.clear();
    for (const json& v : list) config.seeds.push_back(seed_at(v, "seeds"));
  }
  if (doc.contains("update_interval")) {
    config.update_interval = int_at(doc["update_interval"], "update_interval");
  }

  if (doc.contains("hyperparams")) {
    const json& h = object_at(doc["hyperparams"], "hyperparams");
    reject_unknown(h, "hyperparams", {"alpha", "gamma", "eps_max", "eps_min", "eta"});
    auto set = [&](const char* key, double& field) {
      if (h.contains(key)) field = number_at(h[key], join_key("hyperparams", key));
    };
    set("alpha", config.hyper.alpha);
    set("gamma", config.hyper.gamma);
    set("eps_max", config.hyper.eps_max);
    set("eps_min", config.hyper.eps_min);
    set("eta", config.hyper.eta);
  }

  if (doc.contains("env")) {
    const json& e = object_at(doc["env"], "env");
    reject_unknown(e, "env",
                   {"num_users", "swaps_per_epoch", "user_balance", "pool_liquidity",
                    "amount_min", "amount_max", "tolerance"});
    EnvOverrides& o = config.env;
    if (e.contains("num_users")) o.num_users = int_at(e["num_users"], "env.num_users");
    if (e.contains("swaps_per_epoch")) {
      o.swaps_per_epoch = int_at(e["swaps_per_epoch"], "env.swaps_per_epoch");
    }
    if (e.contains("user_balance")) o.user_balance = number_at(e["user_balance"], "env.user_balance");
    if (e.contains("pool_liquidity")) {
      o.pool_liquidity = number_at(e["pool_liquidity"], "env.pool_liquidity");
    }
    if (e.contains("amount_min")) o.amount_min = number_at(e["amount_min"], "env.amount_min");
    if (e.contains("amount_max")) o.amount_max = number_at(e["amount_max"], "env.amount_max");
    if (e.contains("tolerance")) o.tolerance = tolerance_at(e["tolerance"], "env.tolerance");
  }
  return config;
}

ExperimentConfig config_from_json(const json& doc) { return merge_config(ExperimentConfig{}, doc); }

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const ExperimentConfig& config) {
  json doc;
  doc["scenario"] = scenario_name(config.scenario);
  if (const auto* bc = std::get_if<BehaviorChange>(&config.scenario)) {
    doc["behavior_change"] = {{"from", to_string(bc->from)}, {"to", to_string(bc->to)}};
  }
  if (is_sweep(config.scenario)) doc["sweep_values"] = sweep_values(config.scenario);
  doc["agent"] = std::string(rl::to_string(config.agent));
  doc["epochs"] = config.epochs;
  doc["seeds"] = config.seeds;
  doc["update_interval"] = config.update_interval;
  doc["hyperparams"] = {{"alpha", config.hyper.alpha},     {"gamma", config.hyper.gamma},
                        {"eps_max", config.hyper.eps_max}, {"eps_min", config.hyper.eps_min},
                        {"eta", config.hyper.eta}};
  json env = json::object();
  const EnvOverrides& o = config.env;
  if (o.num_users) env["num_users"] = *o.num_users;
  if (o.swaps_per_epoch) env["swaps_per_epoch"] = *o.swaps_per_epoch;
  if (o.user_balance) env["user_balance"] = *o.user_balance;
  if (o.pool_liquidity) env["pool_liquidity"] = *o.pool_liquidity;
  if (o.amount_min) env["amount_min"] = *o.amount_min;
  if (o.amount_max) env["amount_max"] = *o.amount_max;
  if (o.tolerance) env["tolerance"] = tn_to_json(*o.tolerance);
  doc["env"] = env;
  return doc;
}

}  // namespace ammrl::exp
