#pragma once

#include <span>
#include <vector>

#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/panel.hpp"

namespace transition_att {

inline constexpr double kWeightedCellThreshold = 1e-10;

namespace detail {

inline void check_posteriors(const PanelDataset& data, const PosteriorMatrix& post, int j) {
  if (post.rows() != data.num_units()) {
    throw Error(ErrorCode::kDimensionMismatch, "posterior matrix has the wrong number of rows");
  }
  if (j < 0 || j >= post.cols()) {
    throw Error(ErrorCode::kIndexOutOfRange, "type index " + std::to_string(j) + " out of range");
  }
}

/// zeta_i * tau_ij.
inline std::vector<double> type_weights(const PanelDataset& data, const PosteriorMatrix& post, int j,
                                        std::span<const double> zeta) {
  check_posteriors(data, post, j);
  check_weights(data, zeta);
  std::vector<double> w(static_cast<std::size_t>(data.num_units()));
  for (int i = 0; i < data.num_units(); ++i) w[i] = unit_weight(zeta, i) * post(i, j);
  return w;
}

inline CellOptions weighted_cells(CellOptions opts) {
  if (opts.threshold <= 0.0) opts.threshold = kWeightedCellThreshold;
  return opts;
}

}  // namespace detail

/// ATT within latent type j: treated and control units reweighted by their
/// posterior probability of type j (times optional bootstrap weights).
inline EffectSeries ltatt(const PanelDataset& data, const PosteriorMatrix& posteriors, int j, int lag,
                          const CellOptions& opts = {}, std::span<const double> zeta = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  detail::check_lag(data, lag);
  const auto w = detail::type_weights(data, posteriors, j, zeta);
  const CellOptions cells = detail::weighted_cells(opts);
  EffectSeries series;
  series.method = EffectMethod::kMixture;
  series.lag = lag;
  series.type = j;
  for (int t = data.num_pre_periods() + 1; t <= data.num_periods(); ++t) {
    ContributionTable table;
    try {
      table = detail::matched_comparison(data, w, data.num_pre_periods(), lag, t, cells,
                                         detail::arm_by_treatment(data));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyControlCell) throw;
      throw Error(ErrorCode::kEmptyWeightedCell, "type " + std::to_string(j + 1) + ": " + e.what());
    }
    series.periods.push_back(PeriodEffect{t, std::move(table.effect), std::move(table.counterfactual),
                                          std::move(table.observed), table.dropped_mass});
  }
  return series;
}

/// Share of the treated population in each type.
inline std::vector<double> treated_type_weights(const PanelDataset& data, const PosteriorMatrix& posteriors,
                                                std::span<const double> zeta = {}) {
  detail::check_weights(data, zeta);
  if (posteriors.rows() != data.num_units()) {
    throw Error(ErrorCode::kDimensionMismatch, "posterior matrix has the wrong number of rows");
  }
  const int J = static_cast<int>(posteriors.cols());
  std::vector<double> w(static_cast<std::size_t>(J), 0.0);
  double total = 0.0;
  for (int i = 0; i < data.num_units(); ++i) {
    if (!data.treated(i)) continue;
    const double z = detail::unit_weight(zeta, i);
    total += z;
    for (int j = 0; j < J; ++j) w[j] += z * posteriors(i, j);
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kNoTreatedUnits, "no treated units");
  for (double& x : w) x /= total;
  return w;
}

/// Treated-type-weighted sum of per-type effects.
inline EffectSeries att_aggregate(const PanelDataset& data, const PosteriorMatrix& posteriors,
                                  const std::vector<EffectSeries>& ltatts, std::span<const double> zeta = {}) {
  const auto w = treated_type_weights(data, posteriors, zeta);
  if (ltatts.size() != w.size() || ltatts.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "one effect series per type is required");
  }
  const int K = data.num_categories();
  EffectSeries out;
  out.method = EffectMethod::kMixture;
  out.lag = ltatts.front().lag;
  for (std::size_t s = 0; s < ltatts.front().periods.size(); ++s) {
    PeriodEffect p;
    p.period = ltatts.front().periods[s].period;
    p.effect.assign(K, 0.0);
    p.counterfactual.assign(K, 0.0);
    p.observed.assign(K, 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const auto& q = ltatts[j].periods.at(s);
      if (q.period != p.period) throw Error(ErrorCode::kDimensionMismatch, "effect series periods differ");
      for (int k = 0; k < K; ++k) {
        p.effect[k] += w[j] * q.effect[k];
        p.counterfactual[k] += w[j] * q.counterfactual[k];
        p.observed[k] += w[j] * q.observed[k];
      }
      p.dropped_mass += w[j] * q.dropped_mass;
    }
    out.periods.push_back(std::move(p));
  }
  return out;
}

/// Per-type layers, treated type shares and the aggregate.
struct MixtureEffects {
  std::vector<double> weights;
  std::vector<EffectSeries> types;
  EffectSeries aggregate;

  /// (type 1..J, then aggregate) x post periods x categories.
  std::vector<double> theta() const {
    std::vector<double> out;
    auto push = [&](const EffectSeries& s) {
      for (const auto& p : s.periods) out.insert(out.end(), p.effect.begin(), p.effect.end());
    };
    for (const auto& s : types) push(s);
    push(aggregate);
    return out;
  }
};

inline MixtureEffects mixture_effects(const PanelDataset& data, const PosteriorMatrix& posteriors, int lag,
                                      const CellOptions& opts = {}, std::span<const double> zeta = {}) {
  MixtureEffects me;
  for (int j = 0; j < posteriors.cols(); ++j) me.types.push_back(ltatt(data, posteriors, j, lag, opts, zeta));
  me.weights = treated_type_weights(data, posteriors, zeta);
  me.aggregate = att_aggregate(data, posteriors, me.types, zeta);
  return me;
}

/// Flow decomposition inside type j (one-lag model).
inline FlowDecomposition type_flow_decomposition(const PanelDataset& data, const PosteriorMatrix& posteriors,
                                                 int j, int focal, int t, std::span<const double> zeta = {}) {
  detail::require_simultaneous(data);
  detail::require_arms(data);
  const auto w = detail::type_weights(data, posteriors, j, zeta);
  FlowDecomposition fd;
  try {
    fd = detail::weighted_flows(data, w, focal, t, kWeightedCellThreshold);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptyControlCell) throw;
    throw Error(ErrorCode::kEmptyWeightedCell, "type " + std::to_string(j + 1) + ": " + e.what());
  }
  fd.type = j;
  return fd;
}

/// Pre-treatment transition comparison per type, one report per type.
inline std::vector<PreTrendReport> type_pre_transitions(const PanelDataset& data,
                                                        const PosteriorMatrix& posteriors) {
  detail::require_simultaneous(data);
  std::vector<PreTrendReport> out;
  for (int j = 0; j < posteriors.cols(); ++j) {
    const auto w = detail::type_weights(data, posteriors, j, {});
    auto r = detail::weighted_pre_transitions(data, w, kWeightedCellThreshold);
    r.type = j;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace transition_att
