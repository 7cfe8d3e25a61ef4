#include "ammrl/rl_agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ammrl/format.hpp"

namespace ammrl::rl {
namespace {

constexpr std::string_view kSnapshotMagic = "# ammrl q-table v1";

int move_of(std::size_t index) { return static_cast<int>(index) - 1; }  // 0,1,2 -> -1,0,+1

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::FeeOnly:
      return "fee";
    case AgentKind::LeverageOnly:
      return "leverage";
    case AgentKind::Combined:
      return "combined";
    case AgentKind::Baseline:
      return "baseline";
  }
  return "unknown";
}

AgentKind parse_agent_kind(std::string_view name) {
  if (name == "fee" || name == "fee-only") return AgentKind::FeeOnly;
  if (name == "leverage" || name == "leverage-only") return AgentKind::LeverageOnly;
  if (name == "combined") return AgentKind::Combined;
  if (name == "baseline") return AgentKind::Baseline;
  throw std::invalid_argument("unknown agent kind '" + std::string(name) + "'");
}

std::size_t action_count(AgentKind kind) {
  switch (kind) {
    case AgentKind::FeeOnly:
    case AgentKind::LeverageOnly:
      return 3;
    case AgentKind::Combined:
      return 9;
    case AgentKind::Baseline:
      return 1;
  }
  throw std::invalid_argument("unknown agent kind");
}

ActionEffect decode_action(AgentKind kind, std::size_t index) {
  if (index >= action_count(kind)) {
    throw std::out_of_range("action index outside the agent's action set");
  }
  switch (kind) {
    case AgentKind::FeeOnly:
      return {move_of(index), 0};
    case AgentKind::LeverageOnly:
      return {0, kLeverageStep * move_of(index)};
    case AgentKind::Combined:
      return {move_of(index / 3), kLeverageStep * move_of(index % 3)};
    case AgentKind::Baseline:
      return {};
  }
  return {};
}

void Hyperparams::validate() const {
  auto require = [](bool ok, const char* name) {
    if (!ok) throw std::invalid_argument(std::string("invalid hyperparameter: ") + name);
  };
  require(alpha > 0.0 && alpha <= 1.0, "alpha");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma");
  require(eps_min >= 0.0 && eps_min <= 1.0, "eps_min");
  require(eps_max >= eps_min && eps_max <= 1.0, "eps_max");
  require(eta > 0.0 && std::isfinite(eta), "eta");
}

QTable::QTable(AgentKind kind)
    : kind_(kind), actions_(action_count(kind)), zeros_(actions_, 0.0) {}

std::span<const double> QTable::values(const EnvObservation& obs) const {
  const auto it = cells_.find(obs.key());
  if (it == cells_.end()) return zeros_;
  return it->second;
}

double QTable::value(const EnvObservation& obs, std::size_t action) const {
  return values(obs)[action];
}

void QTable::set(const EnvObservation& obs, std::size_t action, double value) {
  if (action >= actions_) throw std::out_of_range("action index outside the table");
  auto [it, inserted] = cells_.try_emplace(obs.key(), zeros_);
  it->second[action] = value;
}

std::vector<std::pair<std::uint32_t, std::vector<double>>> QTable::rows() const {
  std::vector<std::pair<std::uint32_t, std::vector<double>>> out(cells_.begin(), cells_.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

double epsilon_at(int epoch, const Hyperparams& hyper) {
  return hyper.eps_min +
         (hyper.eps_max - hyper.eps_min) * std::exp(-hyper.eta * static_cast<double>(epoch));
}

std::size_t select_action(const QTable& table, const EnvObservation& obs, double epsilon,
                          Rng& rng) {
  const std::size_t n = table.actions();
  if (n == 1) return 0;
  if (rng.uniform() < epsilon) return static_cast<std::size_t>(rng.index(n));

  const std::span<const double> q = table.values(obs);
  const double best = *std::max_element(q.begin(), q.end());
  std::size_t ties = 0;
  for (double v : q) ties += (v == best);
  std::size_t pick = ties > 1 ? static_cast<std::size_t>(rng.index(ties)) : 0;
  for (std::size_t a = 0; a < n; ++a) {
    if (q[a] == best && pick-- == 0) return a;
  }
  return 0;
}

void td_update(QTable& table, const EnvObservation& obs, std::size_t action, double reward,
               const EnvObservation& next_obs, const Hyperparams& hyper, bool terminal) {
  double target = reward;
  if (!terminal) {
    const std::span<const double> next = table.values(next_obs);
    target += hyper.gamma * *std::max_element(next.begin(), next.end());
  }
  const double current = table.value(obs, action);
  table.set(obs, action, current + hyper.alpha * (target - current));
}

CurveParams apply_action(const CurveParams& params, const ActionEffect& effect) {
  CurveParams next = params;
  next.fee_level = std::clamp(params.fee_level + effect.delta_fee_levels, 0, amm::kFeeLevels - 1);
  next.leverage_coeff = std::clamp(params.leverage_coeff + effect.delta_leverage,
                                   amm::kMinLeverage, amm::kMaxLeverage);
  return next;
}

double action_stddev(std::span<const std::size_t> actions) {
  if (actions.empty()) return 0.0;
  const double n = static_cast<double>(actions.size());
  double mean = 0.0;
  for (std::size_t a : actions) mean += static_cast<double>(a);
  mean /= n;
  double var = 0.0;
  for (std::size_t a : actions) {
    const double d = static_cast<double>(a) - mean;
    var += d * d;
  }
  return std::sqrt(var / n);
}

ActionDispersion action_stddev(const std::vector<std::vector<std::size_t>>& history) {
  if (history.empty()) throw std::invalid_argument("action history is empty");
  ActionDispersion out;
  out.per_epoch.reserve(history.size());
  for (const auto& epoch : history) out.per_epoch.push_back(action_stddev(epoch));
  double sum = 0.0;
  for (double s : out.per_epoch) sum += s;
  out.mean = sum / static_cast<double>(out.per_epoch.size());
  return out;
}

void write_qtable(std::ostream& out, const QTable& table, const Hyperparams& hyper) {
  out << kSnapshotMagic << '\n';
  out << "agent=" << to_string(table.kind()) << '\n';
  out << "actions=" << table.actions() << '\n';
  out << "alpha=" << format_double(hyper.alpha) << '\n';
  out << "gamma=" << format_double(hyper.gamma) << '\n';
  out << "eps_max=" << format_double(hyper.eps_max) << '\n';
  out << "eps_min=" << format_double(hyper.eps_min) << '\n';
  out << "eta=" << format_double(hyper.eta) << '\n';
  out << "bucket,feeLevel,leverage";
  for (std::size_t a = 0; a < table.actions(); ++a) out << ",q" << a;
  out << '\n';
  for (const auto& [key, values] : table.rows()) {
    const EnvObservation obs = EnvObservation::from_key(key);
    out << obs.slippage_bucket << ',' << obs.fee_level << ',' << obs.leverage;
    for (double v : values) out << ',' << format_double(v);
    out << '\n';
  }
}

void save_qtable(const QTable& table, const Hyperparams& hyper,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_qtable(out, table, hyper);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

QTableSnapshot read_qtable(std::istream& in) {
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw std::runtime_error(std::string("q-table snapshot truncated before ") + what);
    }
  };
  next_line("header");
  if (line != kSnapshotMagic) throw std::runtime_error("not a q-table snapshot");

  std::map<std::string, std::string, std::less<>> header;
  for (const char* key : {"agent", "actions", "alpha", "gamma", "eps_max", "eps_min", "eta"}) {
    next_line(key);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || line.substr(0, eq) != key) {
      throw std::runtime_error(std::string("q-table snapshot: expected '") + key + "='");
    }
    header[key] = line.substr(eq + 1);
  }

  QTableSnapshot snap{QTable(parse_agent_kind(header["agent"])), Hyperparams{}};
  if (parse_integer<std::size_t>(header["actions"]) != snap.table.actions()) {
    throw std::runtime_error("q-table snapshot: action count does not match agent kind");
  }
  snap.hyper.alpha = parse_double(header["alpha"]);
  snap.hyper.gamma = parse_double(header["gamma"]);
  snap.hyper.eps_max = parse_double(header["eps_max"]);
  snap.hyper.eps_min = parse_double(header["eps_min"]);
  snap.hyper.eta = parse_double(header["eta"]);

  next_line("column header");
  const std::size_t width = 3 + snap.table.actions();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != width) throw std::runtime_error("q-table snapshot: bad row '" + line + "'");
    EnvObservation obs;
    obs.slippage_bucket = parse_integer<int>(fields[0]);
    obs.fee_level = parse_integer<int>(fields[1]);
    obs.leverage = parse_integer<int>(fields[2]);
    for (std::size_t a = 0; a < snap.table.actions(); ++a) {
      snap.table.set(obs, a, parse_double(fields[3 + a]));
    }
  }
  return snap;
}

QTableSnapshot load_qtable(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_qtable(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace ammrl::rl
