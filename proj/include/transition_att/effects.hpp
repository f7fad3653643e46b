#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transition_att/error.hpp"
#include "transition_att/panel.hpp"

namespace transition_att {

enum class EffectMethod { kTransitionIndependence, kDifferenceInDifferences, kDidBias, kMixture };

inline std::string method_name(EffectMethod m) {
  switch (m) {
    case EffectMethod::kTransitionIndependence: return "TI";
    case EffectMethod::kDifferenceInDifferences: return "DiD";
    case EffectMethod::kDidBias: return "DiD-bias";
    case EffectMethod::kMixture: return "mixture";
  }
  return "unknown";
}

enum class EmptyCellPolicy { kError, kDrop };

/// How history cells without comparison units are handled. A cell is empty
/// when its (weighted) denominator is at or below `threshold`.
struct CellOptions {
  EmptyCellPolicy policy = EmptyCellPolicy::kError;
  double threshold = 0.0;
};

struct PeriodEffect {
  int period = 0;
  std::vector<double> effect;
  std::vector<double> counterfactual;  // empty for DiD
  std::vector<double> observed;        // treated mean over retained histories
  double dropped_mass = 0.0;
};

/// Effect vectors for every post period, in ascending period order.
struct EffectSeries {
  EffectMethod method = EffectMethod::kTransitionIndependence;
  int lag = 0;
  std::optional<int> type;  // 0-based latent type for per-type layers
  std::vector<PeriodEffect> periods;

  const PeriodEffect& at(int t) const {
    for (const auto& p : periods) {
      if (p.period == t) return p;
    }
    throw Error(ErrorCode::kIndexOutOfRange, "no effect stored for period " + std::to_string(t));
  }
};

struct HistoryContribution {
  HistoryKey history;
  std::vector<double> effect;          // E[X_t | h, D=1] - E[X_t | h, D=0]
  std::vector<double> counterfactual;  // E[X_t | h, D=0]
  double treated_share = 0.0;          // P(h | D=1), before renormalization
  double weight = 0.0;                 // share renormalized over retained histories
  double treated_count = 0.0;
  double control_count = 0.0;
};

struct ContributionTable {
  int period = 0;
  int lag = 0;
  std::vector<HistoryContribution> rows;  // retained histories, ascending code
  std::vector<HistoryKey> dropped;
  double dropped_mass = 0.0;
  std::vector<double> effect;
  std::vector<double> counterfactual;
  std::vector<double> observed;
};

struct FlowChannel {
  int state = 0;         // non-focal state y
  double inflow = 0.0;   // y -> focal
  double outflow = 0.0;  // focal -> y
};

struct FlowDecomposition {
  int focal = 0;
  int period = 0;
  std::optional<int> type;
  std::vector<FlowChannel> channels;
  double net = 0.0;       // sum inflow - sum outflow
  double att = 0.0;       // ATT on the focal category at one lag
  double residual = 0.0;  // att - net
};

struct TransitionCell {
  int period = 0;  // t, transition from t-1 to t
  int from = 0;
  int to = 0;
  double count_treated = 0.0;  // (weighted) transitions from->to
  double count_control = 0.0;
  double row_treated = 0.0;  // (weighted) units at `from` in t-1
  double row_control = 0.0;
  std::optional<double> p_treated;
  std::optional<double> p_control;
  std::optional<double> difference;  // treated - control
};

struct PreTrendReport {
  bool insufficient_pre_periods = false;
  std::optional<int> type;
  std::vector<TransitionCell> cells;  // ordered by (period, from, to)
};

namespace detail {

inline void require_arms(const PanelDataset& data) {
  if (data.num_treated() == 0) throw Error(ErrorCode::kNoTreatedUnits, "no treated units");
  if (data.num_control() == 0) throw Error(ErrorCode::kNoControlUnits, "no control units");
}

inline void require_simultaneous(const PanelDataset& data) {
  if (data.is_staggered()) {
    throw Error(ErrorCode::kStaggeredTiming,
                "treatment starts in several periods; use the cohort estimators");
  }
}

inline double unit_weight(std::span<const double> weights, int i) {
  return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
}

inline void check_weights(const PanelDataset& data, std::span<const double> weights) {
  if (!weights.empty() && static_cast<int>(weights.size()) != data.num_units()) {
    throw Error(ErrorCode::kDimensionMismatch, "one weight per unit is required");
  }
}

/// History-matched comparison of outcome period `t` between arms, with
/// histories of length `lag` ending at `anchor`. `arm_of(i)` returns 1 for
/// the focal (treated) group, 0 for comparison units and -1 to skip.
template <typename ArmOf>
ContributionTable matched_comparison(const PanelDataset& data, std::span<const double> weights,
                                     int anchor, int lag, int t, const CellOptions& opts,
                                     ArmOf&& arm_of) {
  check_history_window(data, anchor, lag);
  check_weights(data, weights);
  const int K = data.num_categories();
  const int H = ipow(K, lag);
  std::vector<double> w1(H, 0.0), w0(H, 0.0);
  std::vector<double> s1(static_cast<std::size_t>(H) * K, 0.0), s0(static_cast<std::size_t>(H) * K, 0.0);
  double treated_total = 0.0;
  for (int i = 0; i < data.num_units(); ++i) {
    const int arm = arm_of(i);
    if (arm < 0) continue;
    const double w = unit_weight(weights, i);
    const int h = history_code(data, i, anchor, lag);
    const int y = data.outcome(i, t);
    if (arm == 1) {
      w1[h] += w;
      s1[static_cast<std::size_t>(h) * K + y] += w;
      treated_total += w;
    } else {
      w0[h] += w;
      s0[static_cast<std::size_t>(h) * K + y] += w;
    }
  }
  if (!(treated_total > opts.threshold)) {
    throw Error(ErrorCode::kNoTreatedUnits, "treated group carries no weight");
  }

  ContributionTable table;
  table.period = t;
  table.lag = lag;
  double retained = 0.0;
  for (int h = 0; h < H; ++h) {
    if (!(w1[h] > opts.threshold)) continue;
    const double share = w1[h] / treated_total;
    if (!(w0[h] > opts.threshold)) {
      HistoryKey key = HistoryKey::decode(h, lag, K);
      if (opts.policy == EmptyCellPolicy::kError) {
        throw Error(ErrorCode::kEmptyControlCell,
                    "history " + key.to_string(data.alphabet()) + " at period " +
                        std::to_string(anchor) + " has treated units but no comparison units");
      }
      table.dropped.push_back(std::move(key));
      table.dropped_mass += share;
      continue;
    }
    HistoryContribution row;
    row.history = HistoryKey::decode(h, lag, K);
    row.treated_share = share;
    row.treated_count = w1[h];
    row.control_count = w0[h];
    row.effect.resize(K);
    row.counterfactual.resize(K);
    for (int k = 0; k < K; ++k) {
      const double m1 = s1[static_cast<std::size_t>(h) * K + k] / w1[h];
      const double m0 = s0[static_cast<std::size_t>(h) * K + k] / w0[h];
      row.counterfactual[k] = m0;
      row.effect[k] = m1 - m0;
    }
    retained += share;
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) {
    throw Error(ErrorCode::kEmptyControlCell, "no treated history has comparison units");
  }
  table.effect.assign(K, 0.0);
  table.counterfactual.assign(K, 0.0);
  table.observed.assign(K, 0.0);
  for (auto& row : table.rows) {
    row.weight = row.treated_share / retained;
    for (int k = 0; k < K; ++k) {
      table.effect[k] += row.weight * row.effect[k];
      table.counterfactual[k] += row.weight * row.counterfactual[k];
      table.observed[k] += row.weight * (row.effect[k] + row.counterfactual[k]);
    }
  }
  return table;
}

inline auto arm_by_treatment(const PanelDataset& data) {
  return [&data](int i) { return data.treated(i) ? 1 : 0; };
}

inline void check_post_period(const PanelDataset& data, int t) {
  if (t <= data.num_pre_periods() || t > data.num_periods()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "period " + std::to_string(t) + " is not a post-treatment period");
  }
}

inline void check_lag(const PanelDataset& data, int lag) {
  if (lag < 1 || lag > data.num_pre_periods()) {
    throw Error(ErrorCode::kLagExceedsHistory,
                "lag " + std::to_string(lag) + " needs at least that many pre-treatment periods");
  }
}

}  // namespace detail

/// History-matched counterfactual mean E[ E[X_t | h, D=0] | D=1 ] with
/// histories of the last `lag` pre-treatment outcomes, and its per-history
/// table.
inline ContributionTable conditional_counterfactual_mean(const PanelDataset& data, int lag, int t,
                                                         const CellOptions& opts = {},
                                                         std::span<const double> weights = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  detail::check_lag(data, lag);
  detail::check_post_period(data, t);
  return detail::matched_comparison(data, weights, data.num_pre_periods(), lag, t, opts,
                                    detail::arm_by_treatment(data));
}

/// History-specific contributions to the ATT at period t. Sum of
/// weight * effect over rows equals the ATT.
inline ContributionTable history_contributions(const PanelDataset& data, int lag, int t,
                                               const CellOptions& opts = {},
                                               std::span<const double> weights = {}) {
  return conditional_counterfactual_mean(data, lag, t, opts, weights);
}

/// ATT under transition independence given the last `lag` pre-treatment
/// outcomes, for every post period.
inline EffectSeries ti_att(const PanelDataset& data, int lag = 1, const CellOptions& opts = {},
                           std::span<const double> weights = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  detail::check_lag(data, lag);
  EffectSeries series;
  series.method = EffectMethod::kTransitionIndependence;
  series.lag = lag;
  for (int t = data.num_pre_periods() + 1; t <= data.num_periods(); ++t) {
    auto table = detail::matched_comparison(data, weights, data.num_pre_periods(), lag, t, opts,
                                            detail::arm_by_treatment(data));
    series.periods.push_back(PeriodEffect{t, std::move(table.effect), std::move(table.counterfactual),
                                          std::move(table.observed), table.dropped_mass});
  }
  return series;
}

/// Two-group difference in mean changes from the last pre-treatment period.
inline EffectSeries did_att(const PanelDataset& data, std::span<const double> weights = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  detail::check_weights(data, weights);
  const int K = data.num_categories();
  const int T0 = data.num_pre_periods();
  EffectSeries series;
  series.method = EffectMethod::kDifferenceInDifferences;
  series.lag = 0;
  for (int t = T0 + 1; t <= data.num_periods(); ++t) {
    std::vector<double> change1(K, 0.0), change0(K, 0.0), level1(K, 0.0);
    double w1 = 0.0, w0 = 0.0;
    for (int i = 0; i < data.num_units(); ++i) {
      const double w = detail::unit_weight(weights, i);
      auto& change = data.treated(i) ? change1 : change0;
      change[data.outcome(i, t)] += w;
      change[data.outcome(i, T0)] -= w;
      if (data.treated(i)) {
        level1[data.outcome(i, t)] += w;
        w1 += w;
      } else {
        w0 += w;
      }
    }
    PeriodEffect p;
    p.period = t;
    p.effect.resize(K);
    p.observed.resize(K);
    for (int k = 0; k < K; ++k) {
      p.effect[k] = change1[k] / w1 - change0[k] / w0;
      p.observed[k] = level1[k] / w1;
    }
    series.periods.push_back(std::move(p));
  }
  return series;
}

/// Bias of DiD relative to the transition-independence ATT:
/// sum_h E[X_t - x_T0 | h, D=0] (P(h | D=1) - P(h | D=0)), histories of
/// length `lag` ending at T0. Requires every treated history to have
/// control units.
inline EffectSeries did_bias(const PanelDataset& data, int lag = 1) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  detail::check_lag(data, lag);
  const int K = data.num_categories();
  const int T0 = data.num_pre_periods();
  const int H = ipow(K, lag);
  const double n1 = data.num_treated();
  const double n0 = data.num_control();
  std::vector<double> c1(H, 0.0), c0(H, 0.0);
  for (int i = 0; i < data.num_units(); ++i) {
    const int h = history_code(data, i, T0, lag);
    (data.treated(i) ? c1 : c0)[h] += 1.0;
  }
  for (int h = 0; h < H; ++h) {
    if (c1[h] > 0 && c0[h] == 0) {
      throw Error(ErrorCode::kEmptyControlCell,
                  "history " + HistoryKey::decode(h, lag, K).to_string(data.alphabet()) +
                      " has treated units but no control units");
    }
  }
  EffectSeries series;
  series.method = EffectMethod::kDidBias;
  series.lag = lag;
  for (int t = T0 + 1; t <= data.num_periods(); ++t) {
    std::vector<double> trend(static_cast<std::size_t>(H) * K, 0.0);
    for (int i = 0; i < data.num_units(); ++i) {
      if (data.treated(i)) continue;
      const int h = history_code(data, i, T0, lag);
      trend[static_cast<std::size_t>(h) * K + data.outcome(i, t)] += 1.0;
      trend[static_cast<std::size_t>(h) * K + data.outcome(i, T0)] -= 1.0;
    }
    PeriodEffect p;
    p.period = t;
    p.effect.assign(K, 0.0);
    for (int h = 0; h < H; ++h) {
      if (c0[h] == 0) continue;
      const double gap = c1[h] / n1 - c0[h] / n0;
      for (int k = 0; k < K; ++k) {
        p.effect[k] += trend[static_cast<std::size_t>(h) * K + k] / c0[h] * gap;
      }
    }
    series.periods.push_back(std::move(p));
  }
  return series;
}

namespace detail {

/// Flow decomposition of the one-lag ATT on `focal` at period t, with
/// per-unit weights (posterior type probabilities for type layers).
inline FlowDecomposition weighted_flows(const PanelDataset& data, std::span<const double> weights,
                                        int focal, int t, double threshold) {
  check_weights(data, weights);
  check_post_period(data, t);
  const int K = data.num_categories();
  if (focal < 0 || focal >= K) {
    throw Error(ErrorCode::kIndexOutOfRange, "focal category outside the alphabet");
  }
  const int T0 = data.num_pre_periods();
  // n[d][y][z]: weight with Y_T0 = y, Y_t = z in arm d
  std::vector<double> n1(static_cast<std::size_t>(K) * K, 0.0), n0(static_cast<std::size_t>(K) * K, 0.0);
  std::vector<double> r1(K, 0.0), r0(K, 0.0);
  double total1 = 0.0;
  for (int i = 0; i < data.num_units(); ++i) {
    const double w = unit_weight(weights, i);
    const int y = data.outcome(i, T0);
    const int z = data.outcome(i, t);
    if (data.treated(i)) {
      n1[static_cast<std::size_t>(y) * K + z] += w;
      r1[y] += w;
      total1 += w;
    } else {
      n0[static_cast<std::size_t>(y) * K + z] += w;
      r0[y] += w;
    }
  }
  if (!(total1 > threshold)) throw Error(ErrorCode::kNoTreatedUnits, "treated group carries no weight");
  for (int y = 0; y < K; ++y) {
    if (r1[y] > threshold && !(r0[y] > threshold)) {
      throw Error(ErrorCode::kEmptyControlCell,
                  "state " + data.alphabet().label(y) + " at period " + std::to_string(T0) +
                      " has treated units but no control units");
    }
  }
  auto gap = [&](int from, int to) {
    if (!(r1[from] > threshold)) return 0.0;
    return n1[static_cast<std::size_t>(from) * K + to] / r1[from] -
           n0[static_cast<std::size_t>(from) * K + to] / r0[from];
  };
  FlowDecomposition fd;
  fd.focal = focal;
  fd.period = t;
  double att = 0.0;
  for (int y = 0; y < K; ++y) {
    if (r1[y] > threshold) att += r1[y] / total1 * gap(y, focal);
    if (y == focal) continue;
    FlowChannel ch;
    ch.state = y;
    ch.inflow = gap(y, focal) * (r1[y] / total1);
    ch.outflow = gap(focal, y) * (r1[focal] / total1);
    fd.net += ch.inflow - ch.outflow;
    fd.channels.push_back(ch);
  }
  fd.att = att;
  fd.residual = att - fd.net;
  return fd;
}

inline PreTrendReport weighted_pre_transitions(const PanelDataset& data,
                                               std::span<const double> weights, double threshold) {
  check_weights(data, weights);
  PreTrendReport report;
  const int T0 = data.num_pre_periods();
  const int K = data.num_categories();
  if (T0 < 2) {
    report.insufficient_pre_periods = true;
    return report;
  }
  for (int t = 2; t <= T0; ++t) {
    std::vector<double> n1(static_cast<std::size_t>(K) * K, 0.0), n0(static_cast<std::size_t>(K) * K, 0.0);
    std::vector<double> r1(K, 0.0), r0(K, 0.0);
    for (int i = 0; i < data.num_units(); ++i) {
      const double w = unit_weight(weights, i);
      const int a = data.outcome(i, t - 1);
      const int b = data.outcome(i, t);
      if (data.treated(i)) {
        n1[static_cast<std::size_t>(a) * K + b] += w;
        r1[a] += w;
      } else {
        n0[static_cast<std::size_t>(a) * K + b] += w;
        r0[a] += w;
      }
    }
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b < K; ++b) {
        TransitionCell cell;
        cell.period = t;
        cell.from = a;
        cell.to = b;
        cell.count_treated = n1[static_cast<std::size_t>(a) * K + b];
        cell.count_control = n0[static_cast<std::size_t>(a) * K + b];
        cell.row_treated = r1[a];
        cell.row_control = r0[a];
        if (r1[a] > threshold) cell.p_treated = cell.count_treated / r1[a];
        if (r0[a] > threshold) cell.p_control = cell.count_control / r0[a];
        if (cell.p_treated && cell.p_control) cell.difference = *cell.p_treated - *cell.p_control;
        report.cells.push_back(cell);
      }
    }
  }
  return report;
}

}  // namespace detail

/// Inflow and outflow effects on `focal` at period t, conditioning on the
/// last pre-treatment outcome.
inline FlowDecomposition flow_decomposition(const PanelDataset& data, int focal, int t) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  return detail::weighted_flows(data, {}, focal, t, 0.0);
}

/// ATT machinery applied to the last pre-treatment period, conditioning on
/// histories ending one period earlier. Zero in population under no
/// anticipation and transition independence at T0.
inline std::vector<double> placebo_att(const PanelDataset& data, int lag = 1,
                                       const CellOptions& opts = {},
                                       std::span<const double> weights = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  const int T0 = data.num_pre_periods();
  if (lag < 1 || T0 < lag + 1) {
    throw Error(ErrorCode::kInsufficientPrePeriods,
                "a placebo at lag " + std::to_string(lag) + " needs at least " +
                    std::to_string(lag + 1) + " pre-treatment periods");
  }
  auto table = detail::matched_comparison(data, weights, T0 - 1, lag, T0, opts,
                                          detail::arm_by_treatment(data));
  return table.effect;
}

/// Treated-minus-control one-step transition probabilities over the
/// pre-treatment periods. Cells whose conditioning state is unobserved in
/// an arm carry no probability for that arm.
inline PreTrendReport pre_transition_differences(const PanelDataset& data) {
  detail::require_simultaneous(data);
  return detail::weighted_pre_transitions(data, {}, 0.0);
}

}  // namespace transition_att
