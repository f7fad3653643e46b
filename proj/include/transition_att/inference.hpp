#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "transition_att/error.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/mixture_effects.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/parallel.hpp"

namespace transition_att {

/// Exp(1) weight per unit, or per cluster normalized to sum to one across
/// clusters (clusters taken in sorted id order) and shared by its units.
inline std::vector<double> draw_weights(int n, const std::vector<std::string>* cluster_id, Rng& rng) {
  if (n < 1) throw Error(ErrorCode::kDimensionMismatch, "need at least one unit");
  std::exponential_distribution<double> exp1(1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  if (!cluster_id) {
    for (double& x : w) x = exp1(rng);
    return w;
  }
  if (static_cast<int>(cluster_id->size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch, "one cluster id per unit is required");
  }
  std::map<std::string, double> cw;
  for (const auto& c : *cluster_id) cw.emplace(c, 0.0);
  double total = 0.0;
  for (auto& [id, x] : cw) {
    x = exp1(rng);
    total += x;
  }
  for (auto& [id, x] : cw) x /= total;
  for (int i = 0; i < n; ++i) w[i] = cw.at((*cluster_id)[i]);
  return w;
}

inline std::vector<double> draw_weights(int n, const std::vector<std::string>* cluster_id, std::uint64_t seed,
                                        std::uint64_t replicate = 0, std::uint64_t attempt = 0) {
  Rng rng = derive_rng(seed, replicate, attempt);
  return draw_weights(n, cluster_id, rng);
}

struct EstimationConfig {
  int num_types = 1;
  int lag = 1;
  double eps = 1e-6;
  MultistartSchedule schedule;
  CellOptions cells;
  // The point estimate is iterated until no probability moves by more than
  // polish_tol so that it is an EM fixed point.
  double polish_tol = 1e-11;
  int polish_max_iter = 20000;
  // Replicates start from the point estimate plus a short multistart.
  bool full_schedule = false;
  MultistartSchedule topup{50, 2, 10, 1e-3, 100};
  double topup_margin = 1e-6;
};

struct PointEstimate {
  EmFit fit;
  MixtureEffects effects;
  std::vector<double> theta;
};

/// Multistart fit, polished to a fixed point, and its second-stage effects.
inline PointEstimate estimate_point(const PanelDataset& data, const EstimationConfig& cfg, std::uint64_t seed,
                                    int workers = 1) {
  MultistartOptions mo;
  mo.workers = workers;
  mo.eps = cfg.eps;
  EmFit fit = multistart_fit(data, cfg.num_types, cfg.lag, cfg.schedule, seed, mo);
  EmFit polished =
      run_em(data, fit.params, EmOptions{cfg.polish_tol, cfg.polish_max_iter, ConvergenceRule::kParameters});
  if (polished.loglik() >= fit.loglik() - 1e-9 * std::max(1.0, std::abs(fit.loglik()))) {
    polished.warnings.insert(polished.warnings.end(), fit.warnings.begin(), fit.warnings.end());
    fit = relabel_ascending(std::move(polished));
  }
  PointEstimate pe;
  pe.effects = mixture_effects(data, fit.posteriors, cfg.lag, cfg.cells);
  pe.theta = pe.effects.theta();
  pe.fit = std::move(fit);
  return pe;
}

struct ReplicateResult {
  std::vector<double> theta;
  Eigen::VectorXd pi;
  double loglik = 0.0;
};

/// One weighted-bootstrap replicate: weighted EM (warm-started at `warm`
/// unless the full schedule is requested), relabeling, and weighted second
/// stage. Estimation failures surface as ReplicateFailed.
inline ReplicateResult bootstrap_replicate(const PanelDataset& data, std::span<const double> zeta,
                                           const EstimationConfig& cfg, const MarkovMixtureParams& warm,
                                           std::uint64_t seed) {
  for (double z : zeta) {
    if (!(z > 0.0) || !std::isfinite(z)) throw Error(ErrorCode::kDimensionMismatch, "weights must be positive");
  }
  try {
    EncodedPanel enc(data, cfg.lag);
    const Eigen::VectorXd w = enc.pattern_weights(zeta);
    const EmOptions opts{cfg.schedule.tol, cfg.schedule.max_iter, ConvergenceRule::kLoglik};
    EmFit fit;
    if (cfg.full_schedule) {
      MultistartOptions mo;
      mo.eps = cfg.eps;
      mo.weights = zeta;
      fit = multistart_fit(data, cfg.num_types, cfg.lag, cfg.schedule, seed, mo);
    } else {
      enc.check(warm);
      fit = detail::run_em_encoded(enc, w, warm, opts);
      fit.posteriors = detail::expand_posteriors(enc, fit.posteriors);
      fit = relabel_ascending(std::move(fit));
      if (cfg.num_types > 1 && cfg.topup.n_short > 0) {
        MultistartOptions mo;
        mo.eps = cfg.eps;
        mo.weights = zeta;
        EmFit alt = multistart_fit(data, cfg.num_types, cfg.lag, cfg.topup, seed, mo);
        const double margin = cfg.topup_margin * std::max(1.0, std::abs(fit.loglik()));
        if (alt.loglik() > fit.loglik() + margin) fit = std::move(alt);
      }
    }
    if (!std::isfinite(fit.loglik())) throw Error(ErrorCode::kReplicateFailed, "non-finite likelihood");
    const double check = log_likelihood(data, fit.params, zeta);
    if (std::abs(check - fit.loglik()) > 1e-10 * std::max(1.0, std::abs(check))) {
      throw Error(ErrorCode::kReplicateFailed, "relabeling changed the likelihood");
    }
    ReplicateResult r;
    r.theta = mixture_effects(data, fit.posteriors, cfg.lag, cfg.cells, zeta).theta();
    r.pi = fit.params.pi;
    r.loglik = fit.loglik();
    return r;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kReplicateFailed) throw;
    throw Error(ErrorCode::kReplicateFailed, e.what());
  }
}

struct BootstrapDraws {
  int B = 0;
  std::vector<double> theta_hat;
  Eigen::MatrixXd draws;  // successful replicates x dim, in replicate order
  std::vector<double> sigma;
  int failures = 0;
  std::uint64_t seed = 0;
  std::vector<int> replicate_index;  // replicate b of each row
  std::vector<double> min_pi_gap;    // smallest gap between sorted pi, per row

  int dim() const { return static_cast<int>(theta_hat.size()); }
};

struct BootstrapOptions {
  int B = 500;
  std::uint64_t seed = 0;
  int workers = 1;
  bool cluster = false;
  int max_retries = 3;
};

namespace detail {

inline std::vector<double> column_sd(const Eigen::MatrixXd& draws) {
  const int R = static_cast<int>(draws.rows());
  std::vector<double> sd(static_cast<std::size_t>(draws.cols()), 0.0);
  if (R < 2) return sd;
  for (int c = 0; c < draws.cols(); ++c) {
    const double mean = draws.col(c).mean();
    double ss = 0.0;
    for (int r = 0; r < R; ++r) ss += (draws(r, c) - mean) * (draws(r, c) - mean);
    sd[c] = std::sqrt(ss / (R - 1));
  }
  return sd;
}

}  // namespace detail

inline BootstrapDraws run_bootstrap(const PanelDataset& data, const EstimationConfig& cfg,
                                    const PointEstimate& point, const BootstrapOptions& opt) {
  if (opt.B < 2) throw Error(ErrorCode::kInsufficientReplicates, "need at least two replicates");
  const std::vector<std::string>* clusters = nullptr;
  if (opt.cluster) {
    if (!data.cluster()) throw Error(ErrorCode::kMissingColumn, "cluster bootstrap needs a cluster column");
    clusters = &*data.cluster();
  }
  std::vector<std::optional<ReplicateResult>> results(static_cast<std::size_t>(opt.B));
  parallel_for(opt.B, opt.workers, [&](int b) {
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
      const auto zeta = draw_weights(data.num_units(), clusters, opt.seed, static_cast<std::uint64_t>(b),
                                     static_cast<std::uint64_t>(attempt));
      const std::uint64_t em_seed = derive_rng(opt.seed, static_cast<std::uint64_t>(b), 1000 + attempt)();
      try {
        results[b] = bootstrap_replicate(data, zeta, cfg, point.fit.params, em_seed);
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kReplicateFailed) throw;
      }
    }
  });
  BootstrapDraws out;
  out.B = opt.B;
  out.seed = opt.seed;
  out.theta_hat = point.theta;
  const int dim = out.dim();
  int ok = 0;
  for (const auto& r : results) ok += r ? 1 : 0;
  out.failures = opt.B - ok;
  if (out.failures > 0.05 * opt.B) {
    throw Error(ErrorCode::kTooManyFailures, std::to_string(out.failures) + " of " + std::to_string(opt.B) +
                                                 " replicates failed");
  }
  out.draws.resize(ok, dim);
  int row = 0;
  for (int b = 0; b < opt.B; ++b) {
    if (!results[b]) continue;
    const auto& r = *results[b];
    if (static_cast<int>(r.theta.size()) != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "replicate estimand has the wrong length");
    }
    for (int c = 0; c < dim; ++c) out.draws(row, c) = r.theta[c];
    double gap = std::numeric_limits<double>::infinity();
    for (int j = 1; j < r.pi.size(); ++j) gap = std::min(gap, r.pi[j] - r.pi[j - 1]);
    out.min_pi_gap.push_back(r.pi.size() > 1 ? gap : 0.0);
    out.replicate_index.push_back(b);
    ++row;
  }
  out.sigma = detail::column_sd(out.draws);
  return out;
}

/// (R-1)^{-1} sum_b (theta_b - mean)(theta_b - mean)^T over successful
/// replicates.
inline Eigen::MatrixXd covariance(const BootstrapDraws& draws) {
  const Eigen::Index R = draws.draws.rows();
  if (R < 2) throw Error(ErrorCode::kInsufficientReplicates, "need at least two successful replicates");
  const Eigen::RowVectorXd mean = draws.draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.draws.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(R - 1);
}

struct BandCoordinate {
  int index = 0;  // position in theta
  double estimate = 0.0;
  double se = 0.0;
  double pointwise_crit = 0.0;
  double pointwise_lo = 0.0, pointwise_hi = 0.0;
  double uniform_lo = 0.0, uniform_hi = 0.0;
};

struct ConfidenceBands {
  double alpha = 0.05;
  double critical_value = 0.0;
  std::vector<BandCoordinate> coords;
};

namespace detail {

/// ceil(R (1 - alpha))-th smallest value (1-based).
inline double upper_order_statistic(std::vector<double> v, double alpha) {
  const int R = static_cast<int>(v.size());
  int k = static_cast<int>(std::ceil(R * (1.0 - alpha) - 1e-12));
  k = std::clamp(k, 1, R);
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
  return v[k - 1];
}

}  // namespace detail

/// Pointwise and sup-t bands over the coordinates in `subset` (all when
/// empty). Coordinates with zero standard error get degenerate bands and
/// do not enter the supremum.
inline ConfidenceBands uniform_bands(const BootstrapDraws& draws, double alpha, std::vector<int> subset = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kUsage, "alpha must lie in (0, 1)");
  const int R = static_cast<int>(draws.draws.rows());
  if (R < 2) throw Error(ErrorCode::kInsufficientReplicates, "need at least two successful replicates");
  if (subset.empty()) {
    subset.resize(static_cast<std::size_t>(draws.dim()));
    std::iota(subset.begin(), subset.end(), 0);
  }
  ConfidenceBands bands;
  bands.alpha = alpha;
  std::vector<double> sup(static_cast<std::size_t>(R), 0.0);
  for (int c : subset) {
    if (c < 0 || c >= draws.dim()) throw Error(ErrorCode::kIndexOutOfRange, "band coordinate out of range");
    BandCoordinate bc;
    bc.index = c;
    bc.estimate = draws.theta_hat[c];
    bc.se = draws.sigma[c];
    if (bc.se > 0.0) {
      std::vector<double> abs_t(static_cast<std::size_t>(R));
      for (int r = 0; r < R; ++r) {
        abs_t[r] = std::abs(draws.draws(r, c) - bc.estimate) / bc.se;
        sup[r] = std::max(sup[r], abs_t[r]);
      }
      bc.pointwise_crit = detail::upper_order_statistic(std::move(abs_t), alpha);
    }
    bc.pointwise_lo = bc.estimate - bc.pointwise_crit * bc.se;
    bc.pointwise_hi = bc.estimate + bc.pointwise_crit * bc.se;
    bands.coords.push_back(bc);
  }
  bands.critical_value = detail::upper_order_statistic(std::move(sup), alpha);
  for (auto& bc : bands.coords) {
    bc.uniform_lo = bc.estimate - bands.critical_value * bc.se;
    bc.uniform_hi = bc.estimate + bands.critical_value * bc.se;
  }
  return bands;
}

/// Positions in theta of one effect series: `layer` is a type index, or J
/// for the aggregate; optionally a single category.
inline std::vector<int> series_coordinates(int num_types, int num_post, int K, int layer,
                                           std::optional<int> category = std::nullopt) {
  if (layer < 0 || layer > num_types) throw Error(ErrorCode::kIndexOutOfRange, "series layer out of range");
  std::vector<int> out;
  for (int s = 0; s < num_post; ++s) {
    for (int k = 0; k < K; ++k) {
      if (category && *category != k) continue;
      out.push_back((layer * num_post + s) * K + k);
    }
  }
  return out;
}

}  // namespace transition_att
