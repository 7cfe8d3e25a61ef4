// JSON config files for experiments and the run manifest.
//
// Schema (every key optional; unknown keys are rejected):
//   profile          "desk" (500 epochs) | "paper" (3000 epochs)
//   scenario         "normal" | "loose" | "high-liquidity" | "behavior-change"
//                    | "swap-size" | "tolerance" | "update-interval"
//   behavior_change  {"from": "loose"|"normal", "to": "loose"|"normal"}
//   sweep_values     [numbers]   (required for sweep scenarios)
//   agent            "fee" | "leverage" | "combined" | "baseline"
//   epochs           integer >= 1
//   seeds            [unsigned integers]   or   seed: unsigned integer
//   update_interval  integer >= 1
//   hyperparams      {alpha, gamma, eps_max, eps_min, eta}
//   env              {num_users, swaps_per_epoch, user_balance, pool_liquidity,
//                     amount_min, amount_max,
//                     tolerance: "normal" | "loose" | {mu, sigma, lower, upper}}
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ammrl/experiment.hpp"

namespace ammrl::exp {

inline constexpr int kDeskEpochs = 500;
inline constexpr int kPaperEpochs = 3000;

/// A config problem tied to one key (dotted path, e.g. "hyperparams.alpha").
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

int profile_epochs(const std::string& profile);
ToleranceMode parse_tolerance_mode(const std::string& name);
std::string to_string(ToleranceMode mode);

/// Scenario from its name; sweep scenarios take their value list separately.
Scenario make_scenario(const std::string& name, const std::vector<double>& sweep_values = {},
                       BehaviorChange change = {});

/// Fields present in `doc` replace the matching fields of `base`.
ExperimentConfig merge_config(ExperimentConfig base, const nlohmann::json& doc);
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full resolved form; config_from_json(config_to_json(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace ammrl::exp
