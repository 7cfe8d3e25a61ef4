// Tabular Q-learning over the discretized environment observation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ammrl/amm_core.hpp"
#include "ammrl/market_sim.hpp"
#include "ammrl/rng.hpp"

namespace ammrl::rl {

using amm::CurveParams;
using sim::EnvObservation;

enum class AgentKind { FeeOnly, LeverageOnly, Combined, Baseline };

std::string_view to_string(AgentKind kind);
/// Accepts "fee", "leverage", "combined", "baseline" (and the *-only forms).
AgentKind parse_agent_kind(std::string_view name);

struct ActionEffect {
  int delta_fee_levels = 0;
  int delta_leverage = 0;

  friend bool operator==(const ActionEffect&, const ActionEffect&) = default;
};

inline constexpr int kLeverageStep = 2;

std::size_t action_count(AgentKind kind);

/// Combined actions are laid out fee-major: index = 3 * fee_move + leverage_move,
/// with moves ordered (down, hold, up). Index 4 is the no-op.
ActionEffect decode_action(AgentKind kind, std::size_t index);

struct Hyperparams {
  double alpha = 0.1;
  double gamma = 0.99;
  double eps_max = 1.0;
  double eps_min = 0.01;
  double eta = 0.0015;

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Sparse Q-table; unseen observations read as all-zero action values.
class QTable {
 public:
  explicit QTable(AgentKind kind);

  AgentKind kind() const { return kind_; }
  std::size_t actions() const { return actions_; }
  std::size_t size() const { return cells_.size(); }

  std::span<const double> values(const EnvObservation& obs) const;
  double value(const EnvObservation& obs, std::size_t action) const;
  void set(const EnvObservation& obs, std::size_t action, double value);

  /// Rows ordered by observation key.
  std::vector<std::pair<std::uint32_t, std::vector<double>>> rows() const;

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  AgentKind kind_;
  std::size_t actions_;
  std::vector<double> zeros_;
  std::unordered_map<std::uint32_t, std::vector<double>> cells_;
};

double epsilon_at(int epoch, const Hyperparams& hyper);

std::size_t select_action(const QTable& table, const EnvObservation& obs, double epsilon,
                          Rng& rng);

/// One temporal-difference step on Q(obs, action). A terminal transition
/// does not bootstrap from next_obs.
void td_update(QTable& table, const EnvObservation& obs, std::size_t action, double reward,
               const EnvObservation& next_obs, const Hyperparams& hyper, bool terminal = false);

CurveParams apply_action(const CurveParams& params, const ActionEffect& effect);

struct ActionDispersion {
  std::vector<double> per_epoch;
  double mean = 0.0;
};

/// Population standard deviation of action indices within each epoch.
double action_stddev(std::span<const std::size_t> actions);
ActionDispersion action_stddev(const std::vector<std::vector<std::size_t>>& history);

// Snapshot persistence. The text format is
//   # ammrl q-table v1
//   agent=<kind>
//   actions=<count>
//   alpha=.. gamma=.. eps_max=.. eps_min=.. eta=..   (one key per line)
//   bucket,feeLevel,leverage,q0,...,q{n-1}
//   <rows sorted by key>
// with every double written in shortest round-trip form.
struct QTableSnapshot {
  QTable table;
  Hyperparams hyper;
};

void save_qtable(const QTable& table, const Hyperparams& hyper, const std::filesystem::path& path);
void write_qtable(std::ostream& out, const QTable& table, const Hyperparams& hyper);
QTableSnapshot load_qtable(const std::filesystem::path& path);
QTableSnapshot read_qtable(std::istream& in);

}  // namespace ammrl::rl
