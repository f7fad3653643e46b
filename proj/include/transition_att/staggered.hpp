#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/panel.hpp"

namespace transition_att {

enum class ControlMode { kNever, kNotYet, kBoth };

inline std::string mode_name(ControlMode m) {
  switch (m) {
    case ControlMode::kNever: return "never";
    case ControlMode::kNotYet: return "not_yet";
    case ControlMode::kBoth: return "both";
  }
  return "unknown";
}

inline ControlMode parse_mode(const std::string& s) {
  if (s == "never") return ControlMode::kNever;
  if (s == "not_yet") return ControlMode::kNotYet;
  if (s == "both") return ControlMode::kBoth;
  throw Error(ErrorCode::kUsage, "mode must be never, not_yet or both, got '" + s + "'");
}

/// Distinct first-treatment periods, 0 for never treated.
inline std::set<int> cohorts(const PanelDataset& data) {
  std::set<int> out;
  for (int i = 0; i < data.num_units(); ++i) out.insert(data.first_treated_period(i));
  return out;
}

/// Last period with any comparison units available.
inline int last_comparable_period(const PanelDataset& data) {
  const auto gs = cohorts(data);
  if (gs.count(0)) return data.num_periods();
  return *gs.rbegin() - 1;
}

inline std::set<int> control_set(const PanelDataset& data, int g, int t, ControlMode mode) {
  const auto gs = cohorts(data);
  if (g == 0 || !gs.count(g)) throw Error(ErrorCode::kInvalidCohort, "cohort " + std::to_string(g) + " not present");
  if (t < g || t > last_comparable_period(data)) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "period " + std::to_string(t) + " outside [" + std::to_string(g) + ", " +
                    std::to_string(last_comparable_period(data)) + "]");
  }
  std::set<int> out;
  if (mode != ControlMode::kNotYet && gs.count(0)) out.insert(0);
  if (mode != ControlMode::kNever) {
    for (int h : gs) {
      if (h > t) out.insert(h);
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::kEmptyControlSet, "no comparison cohort for g=" + std::to_string(g) +
                                                 ", t=" + std::to_string(t) + " under mode " + mode_name(mode));
  }
  return out;
}

struct CohortCell {
  int cohort = 0;
  int period = 0;
  std::vector<int> controls;
  std::vector<double> effect;
  std::vector<double> counterfactual;
  std::vector<double> observed;
  int num_treated = 0;
  int num_control = 0;
  double dropped_mass = 0.0;
  // Histories whose comparison mean pooled only the cohorts where they occur.
  std::vector<HistoryKey> partial_support;
};

/// Cohort-g ATT at period t: cohort-g mean outcome minus the counterfactual
/// built from histories ending at g-1, where each history's comparison mean
/// mixes the control cohorts' conditional means with the cohort shares
/// P(G = g' | G in controls).
inline CohortCell cohort_att(const PanelDataset& data, int g, int t, int lag, ControlMode mode,
                             const CellOptions& opts = {}) {
  const auto controls = control_set(data, g, t, mode);
  if (lag < 1 || lag > g - 1) {
    throw Error(ErrorCode::kLagExceedsHistory,
                "lag " + std::to_string(lag) + " exceeds the " + std::to_string(g - 1) + " periods before cohort " +
                    std::to_string(g));
  }
  const int K = data.num_categories();
  const int H = ipow(K, lag);
  const int anchor = g - 1;
  const int C = static_cast<int>(controls.size());
  std::map<int, int> slot;
  for (int c : controls) slot.emplace(c, static_cast<int>(slot.size()));

  std::vector<double> w1(H, 0.0), s1(static_cast<std::size_t>(H) * K, 0.0);
  std::vector<double> cohort_size(C, 0.0);
  std::vector<double> w0(static_cast<std::size_t>(C) * H, 0.0), s0(static_cast<std::size_t>(C) * H * K, 0.0);
  CohortCell cell;
  cell.cohort = g;
  cell.period = t;
  cell.controls.assign(controls.begin(), controls.end());
  double treated_total = 0.0;
  for (int i = 0; i < data.num_units(); ++i) {
    const int gi = data.first_treated_period(i);
    const int h = history_code(data, i, anchor, lag);
    const int y = data.outcome(i, t);
    if (gi == g) {
      w1[h] += 1.0;
      s1[static_cast<std::size_t>(h) * K + y] += 1.0;
      treated_total += 1.0;
      ++cell.num_treated;
      continue;
    }
    auto it = slot.find(gi);
    if (it == slot.end()) continue;
    const int c = it->second;
    cohort_size[c] += 1.0;
    w0[static_cast<std::size_t>(c) * H + h] += 1.0;
    s0[(static_cast<std::size_t>(c) * H + h) * K + y] += 1.0;
    ++cell.num_control;
  }
  double control_total = 0.0;
  for (double x : cohort_size) control_total += x;

  cell.effect.assign(K, 0.0);
  cell.counterfactual.assign(K, 0.0);
  cell.observed.assign(K, 0.0);
  struct Row {
    double share;
    std::vector<double> effect, cf;
  };
  std::vector<Row> rows;
  double retained = 0.0;
  for (int h = 0; h < H; ++h) {
    if (!(w1[h] > 0.0)) continue;
    const double share = w1[h] / treated_total;
    double support = 0.0;
    int supported = 0;
    for (int c = 0; c < C; ++c) {
      if (w0[static_cast<std::size_t>(c) * H + h] > opts.threshold) {
        support += cohort_size[c] / control_total;
        ++supported;
      }
    }
    if (supported == 0) {
      HistoryKey key = HistoryKey::decode(h, lag, K);
      if (opts.policy == EmptyCellPolicy::kError) {
        throw Error(ErrorCode::kEmptyControlCell, "history " + key.to_string(data.alphabet()) + " of cohort " +
                                                      std::to_string(g) + " has no comparison units");
      }
      cell.dropped_mass += share;
      continue;
    }
    if (supported < C) cell.partial_support.push_back(HistoryKey::decode(h, lag, K));
    Row row{share, std::vector<double>(K, 0.0), std::vector<double>(K, 0.0)};
    for (int c = 0; c < C; ++c) {
      const double wc = w0[static_cast<std::size_t>(c) * H + h];
      if (!(wc > opts.threshold)) continue;
      const double cw = supported == C ? cohort_size[c] / control_total : cohort_size[c] / control_total / support;
      for (int k = 0; k < K; ++k) row.cf[k] += cw * (s0[(static_cast<std::size_t>(c) * H + h) * K + k] / wc);
    }
    for (int k = 0; k < K; ++k) row.effect[k] = s1[static_cast<std::size_t>(h) * K + k] / w1[h] - row.cf[k];
    retained += share;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::kEmptyControlCell, "no history of cohort " + std::to_string(g) + " has comparison units");
  for (const auto& row : rows) {
    const double w = row.share / retained;
    for (int k = 0; k < K; ++k) {
      cell.effect[k] += w * row.effect[k];
      cell.counterfactual[k] += w * row.cf[k];
      cell.observed[k] += w * (row.effect[k] + row.cf[k]);
    }
  }
  return cell;
}

struct StaggeredAggregate {
  int period = 0;
  std::vector<int> cohorts;
  std::vector<double> weights;  // P(G = g | G != 0, g <= t)
  std::vector<double> effect;
};

struct CohortEffectTable {
  ControlMode mode = ControlMode::kNever;
  int lag = 1;
  std::vector<CohortCell> entries;  // ordered by (g, t)
  std::vector<StaggeredAggregate> aggregate;
};

namespace detail {

inline std::vector<int> treated_cohorts(const PanelDataset& data) {
  std::vector<int> out;
  for (int g : cohorts(data)) {
    if (g != 0) out.push_back(g);
  }
  return out;
}

inline StaggeredAggregate combine_cohorts(const PanelDataset& data, int t, const std::vector<const CohortCell*>& cells) {
  std::map<int, double> size;
  for (int i = 0; i < data.num_units(); ++i) {
    const int g = data.first_treated_period(i);
    if (g != 0 && g <= t) size[g] += 1.0;
  }
  double total = 0.0;
  for (const auto& [g, s] : size) total += s;
  StaggeredAggregate agg;
  agg.period = t;
  agg.effect.assign(data.num_categories(), 0.0);
  for (const CohortCell* c : cells) {
    const double w = size.at(c->cohort) / total;
    agg.cohorts.push_back(c->cohort);
    agg.weights.push_back(w);
    for (int k = 0; k < data.num_categories(); ++k) agg.effect[k] += w * c->effect[k];
  }
  return agg;
}

}  // namespace detail

/// Cohort-share-weighted average of ATT_{g,t} over treated cohorts g <= t.
inline StaggeredAggregate aggregate_staggered(const PanelDataset& data, int t, int lag, ControlMode mode,
                                              const CellOptions& opts = {}) {
  std::vector<CohortCell> cells;
  for (int g : detail::treated_cohorts(data)) {
    if (g <= t) cells.push_back(cohort_att(data, g, t, lag, mode, opts));
  }
  if (cells.empty()) throw Error(ErrorCode::kIndexOutOfRange, "no cohort is treated by period " + std::to_string(t));
  std::vector<const CohortCell*> ptrs;
  for (const auto& c : cells) ptrs.push_back(&c);
  return detail::combine_cohorts(data, t, ptrs);
}

/// Every identified (g, t) cell and the per-period aggregates.
inline CohortEffectTable staggered_effects(const PanelDataset& data, int lag, ControlMode mode,
                                           const CellOptions& opts = {}) {
  CohortEffectTable table;
  table.mode = mode;
  table.lag = lag;
  int last = last_comparable_period(data);
  const auto gs = detail::treated_cohorts(data);
  if (gs.empty()) throw Error(ErrorCode::kNoTreatedUnits, "no treated cohort");
  // never-treated units are not controls here, so stop while a later cohort remains
  if (mode == ControlMode::kNotYet) last = std::min(last, gs.back() - 1);
  if (last < gs.front()) {
    throw Error(ErrorCode::kEmptyControlSet, "no not-yet-treated comparison cohort for any cell");
  }
  for (int g : gs) {
    for (int t = g; t <= last; ++t) table.entries.push_back(cohort_att(data, g, t, lag, mode, opts));
  }
  for (int t = gs.front(); t <= last; ++t) {
    std::vector<const CohortCell*> ptrs;
    for (const auto& c : table.entries) {
      if (c.period == t) ptrs.push_back(&c);
    }
    if (!ptrs.empty()) table.aggregate.push_back(detail::combine_cohorts(data, t, ptrs));
  }
  return table;
}

}  // namespace transition_att
