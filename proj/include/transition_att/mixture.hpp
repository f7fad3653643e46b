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
#include <set>
#include <span>
#include <string>
#include <vector>

#include "transition_att/error.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/parallel.hpp"

namespace transition_att {

/// Per-type parameters of an order-`lag` Markov chain over outcomes with an
/// absorbing treatment. Kernel rows are indexed by the base-K code of the
/// preceding `lag` outcomes.
struct TypeParams {
  Eigen::MatrixXd init_joint;            // K^lag x 2: P(first lag outcomes, D | type)
  std::vector<Eigen::MatrixXd> control;  // t = lag+1..T, each K^lag x K
  std::vector<Eigen::MatrixXd> treated;  // t = T0+1..T, each K^lag x K
};

/// Mixture weights plus type-specific initial distributions and transition
/// kernels.
struct MarkovMixtureParams {
  int num_types = 1;
  int lag = 1;
  int num_categories = 2;
  int num_periods = 2;
  int num_pre_periods = 1;
  double eps = 1e-6;
  Eigen::VectorXd pi;
  std::vector<TypeParams> types;

  int num_histories() const { return ipow(num_categories, lag); }

  Eigen::MatrixXd& control_kernel(int j, int t) { return types[j].control[t - lag - 1]; }
  const Eigen::MatrixXd& control_kernel(int j, int t) const { return types[j].control[t - lag - 1]; }
  Eigen::MatrixXd& treated_kernel(int j, int t) { return types[j].treated[t - num_pre_periods - 1]; }
  const Eigen::MatrixXd& treated_kernel(int j, int t) const {
    return types[j].treated[t - num_pre_periods - 1];
  }

  /// Kernel that moves a unit in arm `d` into period t.
  const Eigen::MatrixXd& kernel(int j, int t, int d) const {
    return (d == 1 && t > num_pre_periods) ? treated_kernel(j, t) : control_kernel(j, t);
  }

  /// Zero-initialized parameters of the given shape.
  static MarkovMixtureParams zeros(int J, int lag, int K, int T, int T0, double eps = 1e-6) {
    MarkovMixtureParams p;
    p.num_types = J;
    p.lag = lag;
    p.num_categories = K;
    p.num_periods = T;
    p.num_pre_periods = T0;
    p.eps = eps;
    p.pi = Eigen::VectorXd::Zero(J);
    const int H = p.num_histories();
    p.types.resize(static_cast<std::size_t>(J));
    for (auto& tp : p.types) {
      tp.init_joint = Eigen::MatrixXd::Zero(H, 2);
      tp.control.assign(static_cast<std::size_t>(T - lag), Eigen::MatrixXd::Zero(H, K));
      tp.treated.assign(static_cast<std::size_t>(T - T0), Eigen::MatrixXd::Zero(H, K));
    }
    return p;
  }

  /// Throws DimensionMismatch unless every table is a distribution within
  /// `tol` and respects the floor.
  void validate(double tol = 1e-12) const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::kDimensionMismatch, what); };
    if (num_types < 1 || lag < 1 || num_categories < 2 || num_pre_periods < lag ||
        num_periods <= num_pre_periods) {
      fail("inconsistent mixture dimensions");
    }
    if (pi.size() != num_types || static_cast<int>(types.size()) != num_types) fail("type count mismatch");
    if (std::abs(pi.sum() - 1.0) > tol) fail("mixture weights do not sum to one");
    const double lo = eps * (1 - 1e-9);
    if (num_types > 1 && (pi.minCoeff() < lo || pi.maxCoeff() > 1 - lo)) fail("mixture weight outside [eps, 1-eps]");
    const int H = num_histories();
    auto check_rows = [&](const Eigen::MatrixXd& m) {
      if (m.rows() != H || m.cols() != num_categories) fail("kernel has the wrong shape");
      for (int r = 0; r < H; ++r) {
        if (std::abs(m.row(r).sum() - 1.0) > tol) fail("kernel row does not sum to one");
        if (m.row(r).minCoeff() < lo) fail("kernel entry below the floor");
      }
    };
    for (const auto& tp : types) {
      if (tp.init_joint.rows() != H || tp.init_joint.cols() != 2) fail("initial table has the wrong shape");
      if (std::abs(tp.init_joint.sum() - 1.0) > tol) fail("initial table does not sum to one");
      if (tp.init_joint.minCoeff() < lo) fail("initial entry below the floor");
      if (static_cast<int>(tp.control.size()) != num_periods - lag ||
          static_cast<int>(tp.treated.size()) != num_periods - num_pre_periods) {
        fail("kernel count mismatch");
      }
      for (const auto& m : tp.control) check_rows(m);
      for (const auto& m : tp.treated) check_rows(m);
    }
  }

  /// pi, then per type: init_joint (row-major), control kernels, treated
  /// kernels.
  std::vector<double> flatten(bool include_init = true) const {
    std::vector<double> out(pi.data(), pi.data() + pi.size());
    auto push = [&](const Eigen::MatrixXd& m) {
      for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
      }
    };
    for (const auto& tp : types) {
      if (include_init) push(tp.init_joint);
      for (const auto& m : tp.control) push(m);
      for (const auto& m : tp.treated) push(m);
    }
    return out;
  }
};

/// Largest absolute difference between two parameter sets of equal shape.
inline double max_abs_difference(const MarkovMixtureParams& a, const MarkovMixtureParams& b,
                                 bool include_init = true) {
  const auto fa = a.flatten(include_init);
  const auto fb = b.flatten(include_init);
  if (fa.size() != fb.size()) throw Error(ErrorCode::kDimensionMismatch, "parameter shapes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) d = std::max(d, std::abs(fa[i] - fb[i]));
  return d;
}

/// n x J matrix of posterior type probabilities.
using PosteriorMatrix = Eigen::MatrixXd;

struct EmFit {
  MarkovMixtureParams params;
  PosteriorMatrix posteriors;
  std::vector<double> loglik_trace;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;

  double loglik() const {
    return loglik_trace.empty() ? -std::numeric_limits<double>::infinity() : loglik_trace.back();
  }
};

enum class ConvergenceRule {
  kLoglik,      // |change in total log-likelihood| < tol
  kParameters,  // largest change of any probability < tol
};

struct EmOptions {
  double tol = 1e-3;
  int max_iter = 100;
  ConvergenceRule rule = ConvergenceRule::kLoglik;
};

struct MultistartSchedule {
  int n_short = 6000;
  int n_long = 20;
  int short_iters = 10;
  double tol = 1e-3;
  int max_iter = 100;
};

/// Panel collapsed to distinct observation vectors (outcome path, arm),
/// each pre-indexed into the parameter tables for a given lag.
class EncodedPanel {
 public:
  EncodedPanel(const PanelDataset& data, int lag) : lag_(lag) {
    if (lag < 1 || lag > data.num_pre_periods()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "Markov order must lie in [1, T0], got " + std::to_string(lag));
    }
    T_ = data.num_periods();
    T0_ = data.num_pre_periods();
    K_ = data.num_categories();
    steps_ = T_ - lag;
    std::map<std::vector<int>, int> index;
    unit_pattern_.resize(static_cast<std::size_t>(data.num_units()));
    std::vector<int> key(static_cast<std::size_t>(T_ + 1));
    for (int i = 0; i < data.num_units(); ++i) {
      for (int t = 1; t <= T_; ++t) key[t - 1] = data.outcome(i, t);
      key[T_] = data.treated(i) ? 1 : 0;
      auto [it, inserted] = index.emplace(key, static_cast<int>(arm_.size()));
      if (inserted) {
        const int d = key[T_];
        arm_.push_back(static_cast<std::uint8_t>(d));
        init_cell_.push_back(history_code(data, i, lag, lag) * 2 + d);
        for (int t = lag + 1; t <= T_; ++t) {
          row_.push_back(history_code(data, i, t - 1, lag));
          col_.push_back(data.outcome(i, t));
        }
        representative_.push_back(i);
      }
      unit_pattern_[i] = it->second;
    }
  }

  int num_patterns() const { return static_cast<int>(arm_.size()); }
  int num_units() const { return static_cast<int>(unit_pattern_.size()); }
  int lag() const { return lag_; }
  int num_periods() const { return T_; }
  int num_pre_periods() const { return T0_; }
  int num_categories() const { return K_; }
  int pattern_of(int unit) const { return unit_pattern_[unit]; }
  int arm(int p) const { return arm_[p]; }
  int init_cell(int p) const { return init_cell_[p]; }
  /// Row code and outcome for the transition into period t.
  int row(int p, int t) const { return row_[static_cast<std::size_t>(p) * steps_ + (t - lag_ - 1)]; }
  int col(int p, int t) const { return col_[static_cast<std::size_t>(p) * steps_ + (t - lag_ - 1)]; }

  /// Sum of unit weights per pattern (unit weights of one when empty).
  Eigen::VectorXd pattern_weights(std::span<const double> weights = {}) const {
    if (!weights.empty() && static_cast<int>(weights.size()) != num_units()) {
      throw Error(ErrorCode::kDimensionMismatch, "one weight per unit is required");
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(num_patterns());
    for (int i = 0; i < num_units(); ++i) w[unit_pattern_[i]] += weights.empty() ? 1.0 : weights[i];
    return w;
  }

  void check(const MarkovMixtureParams& p) const {
    if (p.num_categories != K_ || p.num_periods != T_ || p.num_pre_periods != T0_ || p.lag != lag_) {
      throw Error(ErrorCode::kDimensionMismatch, "parameters do not match the panel dimensions");
    }
  }

 private:
  int lag_, T_, T0_, K_, steps_;
  std::vector<std::uint8_t> arm_;
  std::vector<int> init_cell_, row_, col_, representative_;
  std::vector<int> unit_pattern_;
};

namespace detail {

/// Maximizes sum_k counts[k] log p[k] over distributions with p[k] >= eps.
/// Returns false (and a uniform row) when all counts are zero.
inline bool floored_distribution(const double* counts, double* out, int m, double eps) {
  double total = 0.0;
  for (int k = 0; k < m; ++k) total += counts[k];
  if (!(total > 0.0)) {
    for (int k = 0; k < m; ++k) out[k] = 1.0 / m;
    return false;
  }
  std::vector<char> pinned(static_cast<std::size_t>(m), 0);
  int num_pinned = 0;
  for (;;) {
    double free_total = 0.0;
    for (int k = 0; k < m; ++k) {
      if (!pinned[k]) free_total += counts[k];
    }
    const double mass = 1.0 - eps * num_pinned;
    bool changed = false;
    for (int k = 0; k < m; ++k) {
      if (pinned[k]) {
        out[k] = eps;
        continue;
      }
      out[k] = counts[k] * mass / free_total;
      if (out[k] < eps) {
        pinned[k] = 1;
        ++num_pinned;
        changed = true;
      }
    }
    if (!changed) return true;
  }
}

struct LogTables {
  std::vector<Eigen::VectorXd> log_init;              // per type, 2H
  std::vector<std::vector<Eigen::MatrixXd>> log_ker;  // per type, per (t, arm) slot
  Eigen::VectorXd log_pi;
};

inline LogTables log_tables(const MarkovMixtureParams& p) {
  LogTables lt;
  lt.log_pi = p.pi.array().log();
  const int T = p.num_periods;
  for (int j = 0; j < p.num_types; ++j) {
    const auto& tp = p.types[j];
    Eigen::VectorXd li(tp.init_joint.rows() * 2);
    for (int h = 0; h < tp.init_joint.rows(); ++h) {
      li[2 * h] = std::log(tp.init_joint(h, 0));
      li[2 * h + 1] = std::log(tp.init_joint(h, 1));
    }
    lt.log_init.push_back(std::move(li));
    std::vector<Eigen::MatrixXd> ks;
    for (int t = p.lag + 1; t <= T; ++t) {
      ks.push_back(p.control_kernel(j, t).array().log().matrix());
      ks.push_back(t > p.num_pre_periods ? Eigen::MatrixXd(p.treated_kernel(j, t).array().log().matrix())
                                         : ks.back());
    }
    lt.log_ker.push_back(std::move(ks));
  }
  return lt;
}

/// Per-pattern log joint log(pi_j p_j(W)), P x J.
inline Eigen::MatrixXd pattern_log_joint(const EncodedPanel& enc, const MarkovMixtureParams& p) {
  const LogTables lt = log_tables(p);
  const int P = enc.num_patterns();
  Eigen::MatrixXd lj(P, p.num_types);
  for (int q = 0; q < P; ++q) {
    const int d = enc.arm(q);
    for (int j = 0; j < p.num_types; ++j) {
      double s = lt.log_pi[j] + lt.log_init[j][enc.init_cell(q)];
      for (int t = p.lag + 1; t <= p.num_periods; ++t) {
        const auto& lk = lt.log_ker[j][static_cast<std::size_t>(2 * (t - p.lag - 1) + d)];
        s += lk(enc.row(q, t), enc.col(q, t));
      }
      lj(q, j) = s;
    }
  }
  return lj;
}

/// Posteriors per pattern and the weighted total log-likelihood.
inline double pattern_posteriors(const EncodedPanel& enc, const MarkovMixtureParams& p,
                                 const Eigen::VectorXd& pattern_weight, Eigen::MatrixXd& tau) {
  const Eigen::MatrixXd lj = pattern_log_joint(enc, p);
  const int P = enc.num_patterns();
  tau.resize(P, p.num_types);
  double total = 0.0;
  for (int q = 0; q < P; ++q) {
    const double mx = lj.row(q).maxCoeff();
    if (!std::isfinite(mx)) {
      tau.row(q).setConstant(1.0 / p.num_types);
      if (pattern_weight[q] > 0) total += -std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (int j = 0; j < p.num_types; ++j) {
      tau(q, j) = std::exp(lj(q, j) - mx);
      s += tau(q, j);
    }
    tau.row(q) /= s;
    if (pattern_weight[q] != 0.0) total += pattern_weight[q] * (mx + std::log(s));
  }
  return total;
}

inline MarkovMixtureParams pattern_m_step(const EncodedPanel& enc, const Eigen::MatrixXd& tau,
                                          const Eigen::VectorXd& pattern_weight, int J, double eps,
                                          std::set<std::string>* warnings) {
  const int K = enc.num_categories();
  const int T = enc.num_periods();
  const int T0 = enc.num_pre_periods();
  const int lag = enc.lag();
  MarkovMixtureParams out = MarkovMixtureParams::zeros(J, lag, K, T, T0, eps);
  auto counts = MarkovMixtureParams::zeros(J, lag, K, T, T0, eps);
  Eigen::VectorXd type_mass = Eigen::VectorXd::Zero(J);
  for (int q = 0; q < enc.num_patterns(); ++q) {
    const double w = pattern_weight[q];
    if (w == 0.0) continue;
    const int d = enc.arm(q);
    const int cell = enc.init_cell(q);
    for (int j = 0; j < J; ++j) {
      const double c = w * tau(q, j);
      type_mass[j] += c;
      counts.types[j].init_joint(cell / 2, cell % 2) += c;
      for (int t = lag + 1; t <= T; ++t) {
        auto& m = (t > T0 && d == 1) ? counts.treated_kernel(j, t) : counts.control_kernel(j, t);
        m(enc.row(q, t), enc.col(q, t)) += c;
      }
    }
  }
  floored_distribution(type_mass.data(), out.pi.data(), J, J > 1 ? eps : 0.0);
  auto row_update = [&](const Eigen::MatrixXd& c, Eigen::MatrixXd& o, int j, const char* what, int t) {
    std::vector<double> in(static_cast<std::size_t>(K)), res(static_cast<std::size_t>(K));
    for (int r = 0; r < c.rows(); ++r) {
      for (int k = 0; k < K; ++k) in[k] = c(r, k);
      if (!floored_distribution(in.data(), res.data(), K, eps) && warnings) {
        warnings->insert("DegenerateCell: type " + std::to_string(j + 1) + " " + what + " kernel, period " +
                         std::to_string(t) + ", history " +
                         std::to_string(r) + " has no weight; using a uniform row");
      }
      for (int k = 0; k < K; ++k) o(r, k) = res[k];
    }
  };
  for (int j = 0; j < J; ++j) {
    const auto& ci = counts.types[j].init_joint;
    std::vector<double> in(static_cast<std::size_t>(ci.size())), res(in.size());
    for (int h = 0; h < ci.rows(); ++h) {
      in[2 * h] = ci(h, 0);
      in[2 * h + 1] = ci(h, 1);
    }
    if (!floored_distribution(in.data(), res.data(), static_cast<int>(in.size()), eps) && warnings) {
      warnings->insert("DegenerateCell: type " + std::to_string(j + 1) + " has no weight; uniform initial table");
    }
    for (int h = 0; h < ci.rows(); ++h) {
      out.types[j].init_joint(h, 0) = res[2 * h];
      out.types[j].init_joint(h, 1) = res[2 * h + 1];
    }
    for (int t = lag + 1; t <= T; ++t) {
      row_update(counts.control_kernel(j, t), out.control_kernel(j, t), j, "control", t);
      if (t > T0) row_update(counts.treated_kernel(j, t), out.treated_kernel(j, t), j, "treated", t);
    }
  }
  return out;
}

inline Eigen::MatrixXd expand_posteriors(const EncodedPanel& enc, const Eigen::MatrixXd& tau) {
  Eigen::MatrixXd out(enc.num_units(), tau.cols());
  for (int i = 0; i < enc.num_units(); ++i) out.row(i) = tau.row(enc.pattern_of(i));
  return out;
}

/// EM on an encoded panel. The returned fit carries per-pattern posteriors
/// until expanded by the caller.
inline EmFit run_em_encoded(const EncodedPanel& enc, const Eigen::VectorXd& pattern_weight,
                            MarkovMixtureParams params, const EmOptions& opts) {
  EmFit fit;
  std::set<std::string> warnings;
  std::vector<double> prev_flat;
  Eigen::MatrixXd tau;
  for (;;) {
    const double ll = pattern_posteriors(enc, params, pattern_weight, tau);
    fit.loglik_trace.push_back(ll);
    if (!std::isfinite(ll)) break;
    const std::size_t s = fit.loglik_trace.size();
    if (s >= 2) {
      double change;
      if (opts.rule == ConvergenceRule::kLoglik) {
        change = std::abs(ll - fit.loglik_trace[s - 2]);
      } else {
        const auto flat = params.flatten();
        change = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i) change = std::max(change, std::abs(flat[i] - prev_flat[i]));
      }
      if (change < opts.tol) {
        fit.converged = true;
        break;
      }
    }
    if (fit.iterations >= opts.max_iter) break;
    if (opts.rule == ConvergenceRule::kParameters) prev_flat = params.flatten();
    params = pattern_m_step(enc, tau, pattern_weight, params.num_types, params.eps, &warnings);
    ++fit.iterations;
  }
  fit.params = std::move(params);
  fit.posteriors = std::move(tau);
  fit.warnings.assign(warnings.begin(), warnings.end());
  return fit;
}

}  // namespace detail

/// Sum_i w_i log sum_j pi_j p_j(W_i), with unit weights when `weights` is
/// empty.
inline double log_likelihood(const PanelDataset& data, const MarkovMixtureParams& params,
                             std::span<const double> weights = {}) {
  EncodedPanel enc(data, params.lag);
  enc.check(params);
  Eigen::MatrixXd tau;
  return detail::pattern_posteriors(enc, params, enc.pattern_weights(weights), tau);
}

/// Posterior type probabilities of every unit.
inline PosteriorMatrix e_step(const PanelDataset& data, const MarkovMixtureParams& params) {
  EncodedPanel enc(data, params.lag);
  enc.check(params);
  Eigen::MatrixXd tau;
  detail::pattern_posteriors(enc, params, enc.pattern_weights(), tau);
  return detail::expand_posteriors(enc, tau);
}

/// Weighted-frequency update of every table given posteriors (n x J) and
/// optional unit weights. Pre-period kernels pool both arms; post-period
/// kernels are split by arm. Rows with no weight become uniform and are
/// reported through `warnings`.
inline MarkovMixtureParams m_step(const PanelDataset& data, const PosteriorMatrix& posteriors, int lag,
                                  double eps = 1e-6, std::span<const double> weights = {},
                                  std::vector<std::string>* warnings = nullptr) {
  EncodedPanel enc(data, lag);
  if (posteriors.rows() != data.num_units() || posteriors.cols() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "posterior matrix must be n x J");
  }
  if (!weights.empty() && static_cast<int>(weights.size()) != data.num_units()) {
    throw Error(ErrorCode::kDimensionMismatch, "one weight per unit is required");
  }
  // Units sharing a pattern may carry different posteriors, so the update
  // runs at unit resolution: each unit is its own pattern row here.
  Eigen::MatrixXd tau(enc.num_patterns(), posteriors.cols());
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(enc.num_patterns());
  tau.setZero();
  for (int i = 0; i < data.num_units(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    tau.row(enc.pattern_of(i)) += w * posteriors.row(i);
    mass[enc.pattern_of(i)] += w;
  }
  for (int q = 0; q < enc.num_patterns(); ++q) {
    if (mass[q] > 0) tau.row(q) /= mass[q];
  }
  std::set<std::string> found;
  auto out = detail::pattern_m_step(enc, tau, mass, static_cast<int>(posteriors.cols()), eps, &found);
  if (warnings) warnings->insert(warnings->end(), found.begin(), found.end());
  return out;
}

/// Closed-form single-type fit: weighted empirical frequencies.
inline MarkovMixtureParams empirical_params(const PanelDataset& data, int lag, double eps = 1e-6,
                                            std::span<const double> weights = {}) {
  return m_step(data, PosteriorMatrix::Ones(data.num_units(), 1), lag, eps, weights);
}

inline EmFit run_em(const PanelDataset& data, const MarkovMixtureParams& init, const EmOptions& opts = {},
                    std::span<const double> weights = {}) {
  init.validate(1e-9);
  EncodedPanel enc(data, init.lag);
  enc.check(init);
  EmFit fit = detail::run_em_encoded(enc, enc.pattern_weights(weights), init, opts);
  fit.posteriors = detail::expand_posteriors(enc, fit.posteriors);
  return fit;
}

/// Random interior start: each row of `base` (and of its initial table)
/// multiplied by a symmetric Dirichlet(1) draw and renormalized, mixture
/// weights drawn from Dirichlet(1), then projected onto the floor.
inline MarkovMixtureParams random_start(const MarkovMixtureParams& base, int J, Rng& rng) {
  std::exponential_distribution<double> exp1(1.0);
  const double eps = base.eps;
  auto jitter = [&](std::vector<double>& v) {
    for (double& x : v) x *= exp1(rng);
    std::vector<double> out(v.size());
    detail::floored_distribution(v.data(), out.data(), static_cast<int>(v.size()), eps);
    v = std::move(out);
  };
  MarkovMixtureParams p = MarkovMixtureParams::zeros(J, base.lag, base.num_categories, base.num_periods,
                                                     base.num_pre_periods, eps);
  std::vector<double> pi(static_cast<std::size_t>(J), 1.0);
  jitter(pi);
  for (int j = 0; j < J; ++j) p.pi[j] = pi[j];
  const auto& src = base.types.front();
  auto jitter_kernel = [&](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
    std::vector<double> row(static_cast<std::size_t>(in.cols()));
    for (int r = 0; r < in.rows(); ++r) {
      for (int k = 0; k < in.cols(); ++k) row[k] = in(r, k);
      jitter(row);
      for (int k = 0; k < in.cols(); ++k) out(r, k) = row[k];
    }
  };
  for (int j = 0; j < J; ++j) {
    auto& tp = p.types[j];
    std::vector<double> init(static_cast<std::size_t>(src.init_joint.size()));
    for (int h = 0; h < src.init_joint.rows(); ++h) {
      init[2 * h] = src.init_joint(h, 0);
      init[2 * h + 1] = src.init_joint(h, 1);
    }
    jitter(init);
    for (int h = 0; h < src.init_joint.rows(); ++h) {
      tp.init_joint(h, 0) = init[2 * h];
      tp.init_joint(h, 1) = init[2 * h + 1];
    }
    for (std::size_t s = 0; s < tp.control.size(); ++s) jitter_kernel(src.control[s], tp.control[s]);
    for (std::size_t s = 0; s < tp.treated.size(); ++s) jitter_kernel(src.treated[s], tp.treated[s]);
  }
  return p;
}

/// `base` (single type) replicated into J identical components with equal
/// weights. An EM fixed point with the single-type likelihood.
inline MarkovMixtureParams replicate_components(const MarkovMixtureParams& base, int J) {
  MarkovMixtureParams p = base;
  p.num_types = J;
  p.pi = Eigen::VectorXd::Constant(J, 1.0 / J);
  p.types.assign(static_cast<std::size_t>(J), base.types.front());
  return p;
}

namespace detail {

inline bool lexicographically_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) {
      if (a(r, c) != b(r, c)) return a(r, c) < b(r, c);
    }
  }
  return false;
}

}  // namespace detail

/// Permutation that sorts types by ascending mixture weight, ties broken by
/// the lexicographic order of the row-major initial table.
inline std::vector<int> ascending_order(const MarkovMixtureParams& p) {
  std::vector<int> order(static_cast<std::size_t>(p.num_types));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (p.pi[a] != p.pi[b]) return p.pi[a] < p.pi[b];
    return detail::lexicographically_less(p.types[a].init_joint, p.types[b].init_joint);
  });
  return order;
}

/// Relabels types so that mixture weights are non-decreasing, permuting the
/// posterior columns consistently.
inline EmFit relabel_ascending(EmFit fit) {
  const auto order = ascending_order(fit.params);
  MarkovMixtureParams p = fit.params;
  PosteriorMatrix post = fit.posteriors;
  for (int j = 0; j < fit.params.num_types; ++j) {
    p.pi[j] = fit.params.pi[order[j]];
    p.types[j] = fit.params.types[order[j]];
    if (post.cols() == fit.params.num_types) post.col(j) = fit.posteriors.col(order[j]);
  }
  fit.params = std::move(p);
  fit.posteriors = std::move(post);
  return fit;
}

struct MultistartOptions {
  int workers = 1;
  double eps = 1e-6;
  std::span<const double> weights = {};
};

/// Two-stage multistart EM: n_short random starts run for short_iters
/// iterations, the best n_long continue to convergence, and the best of
/// those (or the single-type fit replicated, if no start beats it) is
/// returned relabeled. Deterministic in `seed` for any worker count.
inline EmFit multistart_fit(const PanelDataset& data, int J, int lag, const MultistartSchedule& schedule,
                            std::uint64_t seed, const MultistartOptions& options = {}) {
  if (J < 1) throw Error(ErrorCode::kDimensionMismatch, "need at least one type");
  if (schedule.n_long < 1 || schedule.n_long > schedule.n_short) {
    throw Error(ErrorCode::kUsage, "multistart schedule needs 1 <= n_long <= n_short");
  }
  EncodedPanel enc(data, lag);
  const Eigen::VectorXd w = enc.pattern_weights(options.weights);
  const MarkovMixtureParams base = empirical_params(data, lag, options.eps, options.weights);
  const EmOptions long_opts{schedule.tol, schedule.max_iter, ConvergenceRule::kLoglik};

  EmFit best;
  if (J == 1) {
    best = detail::run_em_encoded(enc, w, base, long_opts);
  } else {
    std::vector<EmFit> shorts(static_cast<std::size_t>(schedule.n_short));
    parallel_for(schedule.n_short, options.workers, [&](int s) {
      Rng rng = derive_rng(seed, static_cast<std::uint64_t>(s));
      shorts[s] = detail::run_em_encoded(enc, w, random_start(base, J, rng),
                                         EmOptions{-1.0, schedule.short_iters, ConvergenceRule::kLoglik});
    });
    std::vector<int> ranked;
    for (int s = 0; s < schedule.n_short; ++s) {
      if (std::isfinite(shorts[s].loglik())) ranked.push_back(s);
    }
    if (ranked.empty()) throw Error(ErrorCode::kAllStartsFailed, "every start produced a non-finite likelihood");
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](int a, int b) { return shorts[a].loglik() > shorts[b].loglik(); });
    const int n_long = std::min<int>(schedule.n_long, static_cast<int>(ranked.size()));
    std::vector<EmFit> longs(static_cast<std::size_t>(n_long));
    parallel_for(n_long, options.workers, [&](int r) {
      EmFit f = detail::run_em_encoded(enc, w, shorts[ranked[r]].params, long_opts);
      auto& tr = shorts[ranked[r]].loglik_trace;
      f.loglik_trace.insert(f.loglik_trace.begin(), tr.begin(), tr.end() - 1);
      f.iterations += shorts[ranked[r]].iterations;
      longs[r] = std::move(f);
    });
    int pick = -1;
    for (int r = 0; r < n_long; ++r) {
      if (!std::isfinite(longs[r].loglik())) continue;
      if (pick < 0 || longs[r].loglik() > longs[pick].loglik()) pick = r;
    }
    if (pick < 0) throw Error(ErrorCode::kAllStartsFailed, "every long run produced a non-finite likelihood");
    best = std::move(longs[pick]);
    EmFit nested = detail::run_em_encoded(enc, w, replicate_components(base, J), long_opts);
    if (nested.loglik() > best.loglik()) best = std::move(nested);
  }
  best.posteriors = detail::expand_posteriors(enc, best.posteriors);
  return relabel_ascending(std::move(best));
}

/// (J-1) + J [(2 K^l - 1) + (T - l) K^l (K-1) + (T - T0) K^l (K-1)].
inline long long num_free_parameters(int J, int lag, int K, int T, int T0) {
  const long long H = ipow(K, lag);
  return (J - 1) + static_cast<long long>(J) * ((2 * H - 1) + (T - lag) * H * (K - 1) + (T - T0) * H * (K - 1));
}

inline double bic(const PanelDataset& data, const EmFit& fit) {
  const auto& p = fit.params;
  const long long k = num_free_parameters(p.num_types, p.lag, p.num_categories, p.num_periods, p.num_pre_periods);
  return -2.0 * fit.loglik() + static_cast<double>(k) * std::log(static_cast<double>(data.num_units()));
}

struct ModelSelectionRow {
  int num_types = 0;
  double loglik = 0.0;
  long long num_params = 0;
  double bic = 0.0;
};

struct ModelSelection {
  int chosen = 1;
  std::vector<ModelSelectionRow> rows;
  std::vector<EmFit> fits;
};

/// Fits J = 1..J_max and picks the smallest BIC (ties to the smaller J).
inline ModelSelection select_num_types(const PanelDataset& data, int lag, int max_types,
                                       const MultistartSchedule& schedule, std::uint64_t seed,
                                       const MultistartOptions& options = {}) {
  ModelSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int J = 1; J <= max_types; ++J) {
    const std::uint64_t type_seed = derive_rng(seed, static_cast<std::uint64_t>(J), 1)();
    EmFit fit = multistart_fit(data, J, lag, schedule, type_seed, options);
    ModelSelectionRow row;
    row.num_types = J;
    row.loglik = fit.loglik();
    row.num_params = num_free_parameters(J, lag, data.num_categories(), data.num_periods(), data.num_pre_periods());
    row.bic = bic(data, fit);
    if (row.bic < best) {
      best = row.bic;
      sel.chosen = J;
    }
    sel.rows.push_back(row);
    sel.fits.push_back(std::move(fit));
  }
  return sel;
}

}  // namespace transition_att
