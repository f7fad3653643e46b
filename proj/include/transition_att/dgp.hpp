#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/parallel.hpp"

namespace transition_att {

/// Data-generating process: a Markov mixture whose initial table carries
/// the joint law of (first `lag` outcomes, D) per type. Treated units start
/// treatment in one of `cohorts` (drawn with `cohort_shares`, independent of
/// everything else); cohort g follows the treated kernels from period g on.
/// `cohort_kernels`, when non-empty, replaces the treated kernels per cohort
/// (single-type specs only).
struct DgpSpec {
  std::string name;
  OutcomeAlphabet alphabet = OutcomeAlphabet::generic(2);
  MarkovMixtureParams params;
  std::vector<int> cohorts;         // defaults to {T0 + 1}
  std::vector<double> cohort_shares;
  std::vector<std::vector<Eigen::MatrixXd>> cohort_kernels;  // [cohort][t - T0 - 1]
  int n = 1000;
  std::uint64_t seed = 1;

  std::vector<int> cohort_list() const {
    return cohorts.empty() ? std::vector<int>{params.num_pre_periods + 1} : cohorts;
  }
  std::vector<double> cohort_weights() const {
    return cohort_shares.empty() ? std::vector<double>(cohort_list().size(), 1.0 / cohort_list().size())
                                 : cohort_shares;
  }

  /// P(D = 1 | initial history h, type j), NaN where the history has no mass.
  double selection(int j, int h) const {
    const auto& m = params.types[j].init_joint;
    const double s = m(h, 0) + m(h, 1);
    return s > 0 ? m(h, 1) / s : std::nan("");
  }

  /// Kernel into period t for a unit of type j in cohort g (0 = never).
  const Eigen::MatrixXd& kernel(int j, int t, int g) const {
    if (g == 0 || t < g) return params.control_kernel(j, t);
    if (!cohort_kernels.empty()) {
      const auto cs = cohort_list();
      const auto pos = std::find(cs.begin(), cs.end(), g) - cs.begin();
      return cohort_kernels[pos][t - params.num_pre_periods - 1];
    }
    return params.treated_kernel(j, t);
  }

  void validate() const {
    params.validate(1e-9);
    if (alphabet.size() != params.num_categories) {
      throw Error(ErrorCode::kDimensionMismatch, "alphabet size differs from the kernel width");
    }
    for (int j = 0; j < params.num_types; ++j) {
      for (int h = 0; h < params.num_histories(); ++h) {
        const double s = selection(j, h);
        if (std::isnan(s)) continue;
        if (s < params.eps || s > 1 - params.eps) {
          throw Error(ErrorCode::kDimensionMismatch, "selection probability outside [eps, 1-eps]");
        }
      }
    }
    const auto cs = cohort_list();
    const auto cw = cohort_weights();
    if (cs.size() != cw.size()) throw Error(ErrorCode::kDimensionMismatch, "one share per cohort is required");
    double total = 0.0;
    for (std::size_t c = 0; c < cs.size(); ++c) {
      if (cs[c] <= params.num_pre_periods || cs[c] > params.num_periods) {
        throw Error(ErrorCode::kInvalidCohort, "cohort outside the post-treatment periods");
      }
      total += cw[c];
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::kDimensionMismatch, "cohort shares must sum to one");
    if (*std::min_element(cs.begin(), cs.end()) != params.num_pre_periods + 1) {
      throw Error(ErrorCode::kInvalidCohort, "the earliest cohort must start right after the pre-periods");
    }
    if (!cohort_kernels.empty() && (params.num_types != 1 || cohort_kernels.size() != cs.size())) {
      throw Error(ErrorCode::kDimensionMismatch, "cohort kernels need a single type and one set per cohort");
    }
  }
};

/// Simulated panel plus the hidden truth, kept out of PanelDataset.
struct SimulatedPanel {
  PanelDataset data;
  std::vector<int> types;               // latent type per unit
  std::vector<int> untreated_outcomes;  // Y(0) path, row-major n x T
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline int draw_index(const double* p, int m, double u) {
  double c = 0.0;
  for (int k = 0; k < m - 1; ++k) {
    c += p[k];
    if (u < c) return k;
  }
  return m - 1;
}

}  // namespace detail

inline SimulatedPanel simulate(const DgpSpec& spec, int workers = 1) {
  spec.validate();
  const auto& p = spec.params;
  const int n = spec.n;
  const int T = p.num_periods;
  const int K = p.num_categories;
  const int lag = p.lag;
  const int H = p.num_histories();
  const auto cs = spec.cohort_list();
  const auto cw = spec.cohort_weights();
  const bool staggered = cs.size() > 1;
  if (n < 1) throw Error(ErrorCode::kDimensionMismatch, "need at least one unit");

  std::vector<int> outcomes(static_cast<std::size_t>(n) * T), untreated(static_cast<std::size_t>(n) * T);
  std::vector<int> type(static_cast<std::size_t>(n)), cohort(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> init_flat(static_cast<std::size_t>(p.num_types));
  for (int j = 0; j < p.num_types; ++j) {
    for (int h = 0; h < H; ++h) {
      init_flat[j].push_back(p.types[j].init_joint(h, 0));
      init_flat[j].push_back(p.types[j].init_joint(h, 1));
    }
  }
  parallel_for(n, workers, [&](int i) {
    Rng rng(detail::splitmix64(spec.seed ^ detail::splitmix64(static_cast<std::uint64_t>(i))));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int j = detail::draw_index(p.pi.data(), p.num_types, unif(rng));
    const int cell = detail::draw_index(init_flat[j].data(), 2 * H, unif(rng));
    const int d = cell % 2;
    int g = 0;
    if (d == 1) g = cs[detail::draw_index(cw.data(), static_cast<int>(cw.size()), unif(rng))];
    const auto first = HistoryKey::decode(cell / 2, lag, K);
    int* y = &outcomes[static_cast<std::size_t>(i) * T];
    int* y0 = &untreated[static_cast<std::size_t>(i) * T];
    int h1 = cell / 2, h0 = cell / 2;
    for (int t = 1; t <= lag; ++t) y[t - 1] = y0[t - 1] = first.states[t - 1];
    std::vector<double> row(static_cast<std::size_t>(K));
    for (int t = lag + 1; t <= T; ++t) {
      const double u = unif(rng);
      const auto& k1 = spec.kernel(j, t, g);
      const auto& k0 = p.control_kernel(j, t);
      for (int k = 0; k < K; ++k) row[k] = k1(h1, k);
      y[t - 1] = detail::draw_index(row.data(), K, u);
      for (int k = 0; k < K; ++k) row[k] = k0(h0, k);
      y0[t - 1] = detail::draw_index(row.data(), K, u);
      h1 = (h1 * K + y[t - 1]) % H;
      h0 = (h0 * K + y0[t - 1]) % H;
    }
    type[i] = j;
    cohort[i] = g;
  });

  PanelInit init;
  init.alphabet = spec.alphabet;
  init.num_periods = T;
  init.num_pre_periods = p.num_pre_periods;
  init.outcomes = std::move(outcomes);
  init.treated.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) init.treated[i] = cohort[i] != 0 ? 1 : 0;
  if (staggered) init.cohort = cohort;
  SimulatedPanel sim{PanelDataset(std::move(init)), std::move(type), std::move(untreated)};
  return sim;
}

namespace detail {

/// Law of the last `lag` outcomes propagated from `start` (over windows)
/// through periods from..to; returns per-period marginals of Y_t.
template <typename KernelAt>
std::vector<std::vector<double>> propagate(std::vector<double> dist, int lag, int K, int from, int to,
                                           KernelAt&& kernel_at) {
  const int H = ipow(K, lag);
  std::vector<std::vector<double>> marginals;
  std::vector<double> next(static_cast<std::size_t>(H));
  for (int t = from; t <= to; ++t) {
    const Eigen::MatrixXd& k = kernel_at(t);
    std::fill(next.begin(), next.end(), 0.0);
    std::vector<double> m(static_cast<std::size_t>(K), 0.0);
    for (int h = 0; h < H; ++h) {
      if (dist[h] == 0.0) continue;
      for (int y = 0; y < K; ++y) {
        const double q = dist[h] * k(h, y);
        next[(h * K + y) % H] += q;
        m[y] += q;
      }
    }
    dist.swap(next);
    marginals.push_back(std::move(m));
  }
  return marginals;
}

inline void check_enumerable(const MarkovMixtureParams& p, double limit) {
  const double work = std::pow(static_cast<double>(p.num_categories), p.lag + 1) *
                      static_cast<double>(p.num_periods) * p.num_types;
  if (work > limit) {
    throw Error(ErrorCode::kEnumerationTooLarge, "exact propagation would need about " +
                                                     std::to_string(work) + " operations");
  }
}

}  // namespace detail

struct TrueEffects {
  std::vector<double> weights;  // P(Z = j | D = 1)
  std::vector<EffectSeries> types;
  EffectSeries aggregate;

  std::vector<double> theta() const {
    std::vector<double> out;
    auto push = [&](const EffectSeries& s) {
      for (const auto& q : s.periods) out.insert(out.end(), q.effect.begin(), q.effect.end());
    };
    for (const auto& s : types) push(s);
    push(aggregate);
    return out;
  }
};

/// Population LTATTs and ATT of a simultaneous-adoption spec by exact
/// forward propagation of the treated units' outcome law under both arms.
inline TrueEffects true_att(const DgpSpec& spec, double limit = 1e8) {
  spec.validate();
  const auto& p = spec.params;
  if (spec.cohort_list().size() != 1) {
    throw Error(ErrorCode::kStaggeredTiming, "use true_cohort_att for staggered specs");
  }
  detail::check_enumerable(p, limit);
  const int K = p.num_categories;
  const int H = p.num_histories();
  const int T0 = p.num_pre_periods;
  const int T = p.num_periods;
  TrueEffects out;
  double total = 0.0;
  for (int j = 0; j < p.num_types; ++j) {
    std::vector<double> start(static_cast<std::size_t>(H));
    double mass = 0.0;
    for (int h = 0; h < H; ++h) mass += (start[h] = p.types[j].init_joint(h, 1));
    out.weights.push_back(p.pi[j] * mass);
    total += p.pi[j] * mass;
    EffectSeries s;
    s.method = EffectMethod::kMixture;
    s.lag = p.lag;
    s.type = j;
    if (mass > 0) {
      for (double& x : start) x /= mass;
      auto m1 = detail::propagate(start, p.lag, K, p.lag + 1, T, [&](int t) -> const Eigen::MatrixXd& {
        return spec.kernel(j, t, T0 + 1);
      });
      auto m0 = detail::propagate(start, p.lag, K, p.lag + 1, T, [&](int t) -> const Eigen::MatrixXd& {
        return p.control_kernel(j, t);
      });
      for (int t = T0 + 1; t <= T; ++t) {
        PeriodEffect q;
        q.period = t;
        q.observed = m1[t - p.lag - 1];
        q.counterfactual = m0[t - p.lag - 1];
        for (int k = 0; k < K; ++k) q.effect.push_back(q.observed[k] - q.counterfactual[k]);
        s.periods.push_back(std::move(q));
      }
    } else {
      for (int t = T0 + 1; t <= T; ++t) {
        s.periods.push_back(PeriodEffect{t, std::vector<double>(K, 0.0), std::vector<double>(K, 0.0),
                                         std::vector<double>(K, 0.0), 0.0});
      }
    }
    out.types.push_back(std::move(s));
  }
  if (!(total > 0)) throw Error(ErrorCode::kNoTreatedUnits, "the spec never assigns treatment");
  for (double& w : out.weights) w /= total;
  out.aggregate.method = EffectMethod::kMixture;
  out.aggregate.lag = p.lag;
  for (int t = T0 + 1; t <= T; ++t) {
    PeriodEffect q{t, std::vector<double>(K, 0.0), std::vector<double>(K, 0.0), std::vector<double>(K, 0.0), 0.0};
    for (int j = 0; j < p.num_types; ++j) {
      const auto& r = out.types[j].periods[t - T0 - 1];
      for (int k = 0; k < K; ++k) {
        q.effect[k] += out.weights[j] * r.effect[k];
        q.counterfactual[k] += out.weights[j] * r.counterfactual[k];
        q.observed[k] += out.weights[j] * r.observed[k];
      }
    }
    out.aggregate.periods.push_back(std::move(q));
  }
  return out;
}

/// Population ATT of cohort g at period t (treated and untreated laws of
/// the cohort's outcome at t).
inline std::vector<double> true_cohort_att(const DgpSpec& spec, int g, int t, double limit = 1e8) {
  spec.validate();
  const auto& p = spec.params;
  detail::check_enumerable(p, limit);
  const auto cs = spec.cohort_list();
  if (std::find(cs.begin(), cs.end(), g) == cs.end() || t < g || t > p.num_periods) {
    throw Error(ErrorCode::kIndexOutOfRange, "no cohort " + std::to_string(g) + " effect at " + std::to_string(t));
  }
  const int K = p.num_categories;
  const int H = p.num_histories();
  std::vector<double> effect(static_cast<std::size_t>(K), 0.0);
  double total = 0.0;
  for (int j = 0; j < p.num_types; ++j) {
    std::vector<double> start(static_cast<std::size_t>(H));
    double mass = 0.0;
    for (int h = 0; h < H; ++h) mass += (start[h] = p.pi[j] * p.types[j].init_joint(h, 1));
    if (!(mass > 0)) continue;
    total += mass;
    auto m1 = detail::propagate(start, p.lag, K, p.lag + 1, t,
                                [&](int s) -> const Eigen::MatrixXd& { return spec.kernel(j, s, g); });
    auto m0 = detail::propagate(start, p.lag, K, p.lag + 1, t,
                                [&](int s) -> const Eigen::MatrixXd& { return p.control_kernel(j, s); });
    for (int k = 0; k < K; ++k) effect[k] += m1.back()[k] - m0.back()[k];
  }
  for (double& x : effect) x /= total;
  return effect;
}

namespace detail {

inline Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  int i = 0;
  for (const auto& row : r) {
    int c = 0;
    for (double x : row) m(i, c++) = x;
    ++i;
  }
  return m;
}

/// Initial table from a history law and per-history selection.
inline Eigen::MatrixXd init_table(const std::vector<double>& history, const std::vector<double>& selection) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(history.size()), 2);
  for (std::size_t h = 0; h < history.size(); ++h) {
    m(static_cast<Eigen::Index>(h), 0) = history[h] * (1 - selection[h]);
    m(static_cast<Eigen::Index>(h), 1) = history[h] * selection[h];
  }
  return m;
}

inline DgpSpec single_type(std::string name, int K, int T, int T0, const Eigen::MatrixXd& control,
                           const Eigen::MatrixXd& treated, const std::vector<double>& history,
                           const std::vector<double>& selection, double eps) {
  DgpSpec s;
  s.name = std::move(name);
  s.alphabet = OutcomeAlphabet::generic(K);
  s.params = MarkovMixtureParams::zeros(1, 1, K, T, T0, eps);
  s.params.pi[0] = 1.0;
  s.params.types[0].init_joint = init_table(history, selection);
  for (auto& m : s.params.types[0].control) m = control;
  for (auto& m : s.params.types[0].treated) m = treated;
  return s;
}

}  // namespace detail

/// Two-period unemployment/employment example: half of treated and a
/// quarter of control units start employed, employment is absorbing, and
/// unemployed units find work at rate 3/4 if treated and 2/3 otherwise.
inline DgpSpec mr_example_spec() {
  DgpSpec s = detail::single_type("mr-example", 2, 2, 1, detail::rows({{1.0 / 3, 2.0 / 3}, {0.0, 1.0}}),
                                  detail::rows({{0.25, 0.75}, {0.0, 1.0}}), {1.0, 1.0}, {0.5, 0.5}, 0.0);
  s.alphabet = OutcomeAlphabet({"unemployed", "employed"});
  s.params.types[0].init_joint = detail::rows({{0.375, 0.25}, {0.125, 0.25}});
  s.n = 48;
  return s;
}

/// Two well-separated types over three categories: type 1 mostly stays,
/// type 2 mostly moves up one category (cyclically). Treatment swaps the
/// two behaviours.
inline DgpSpec separated_spec(int n = 5000, std::uint64_t seed = 1) {
  const double hi = 0.95, lo = 0.025;
  const auto stay = detail::rows({{hi, lo, lo}, {lo, hi, lo}, {lo, lo, hi}});
  const auto shift = detail::rows({{lo, hi, lo}, {lo, lo, hi}, {hi, lo, lo}});
  DgpSpec s;
  s.name = "separated";
  s.alphabet = OutcomeAlphabet::generic(3);
  s.params = MarkovMixtureParams::zeros(2, 1, 3, 6, 3, 1e-6);
  s.params.pi << 0.45, 0.55;
  const std::vector<double> uniform(3, 1.0 / 3);
  s.params.types[0].init_joint = detail::init_table(uniform, {0.5, 0.5, 0.5});
  s.params.types[1].init_joint = detail::init_table(uniform, {0.4, 0.4, 0.4});
  for (auto& m : s.params.types[0].control) m = stay;
  for (auto& m : s.params.types[0].treated) m = shift;
  for (auto& m : s.params.types[1].control) m = shift;
  for (auto& m : s.params.types[1].treated) m = stay;
  s.n = n;
  s.seed = seed;
  return s;
}

/// Single type, three categories, no treatment effect, with selection that
/// depends on the starting category.
inline DgpSpec null_spec(int n = 2000, std::uint64_t seed = 1) {
  const auto k = detail::rows({{0.6, 0.3, 0.1}, {0.2, 0.6, 0.2}, {0.1, 0.3, 0.6}});
  DgpSpec s = detail::single_type("null", 3, 4, 2, k, k, {0.5, 0.3, 0.2}, {0.3, 0.5, 0.7}, 1e-6);
  s.n = n;
  s.seed = seed;
  return s;
}

/// Binary outcome, cohorts starting at periods 3 and 5 plus never treated,
/// T = 6. Cohort 3 and 5 effects shift the move into category 1 by `a` and
/// `b`; both zero gives the null.
inline DgpSpec staggered_spec(int n = 100000, std::uint64_t seed = 1, double a = 0.0, double b = 0.0) {
  const auto k = detail::rows({{0.7, 0.3}, {0.2, 0.8}});
  DgpSpec s = detail::single_type("staggered", 2, 6, 2, k, k, {0.6, 0.4}, {0.4, 0.6}, 1e-6);
  s.cohorts = {3, 5};
  s.cohort_shares = {0.5, 0.5};
  auto shifted = [&](double e) {
    return detail::rows({{0.7 - e, 0.3 + e}, {0.2 - e, 0.8 + e}});
  };
  s.cohort_kernels = {std::vector<Eigen::MatrixXd>(4, shifted(a)), std::vector<Eigen::MatrixXd>(4, shifted(b))};
  s.n = n;
  s.seed = seed;
  return s;
}

/// Two binary-outcome types with opposite persistence. Treatment raises the
/// chance of entering the first category by `effect1` for type 1 and by
/// `effect2` for type 2.
inline DgpSpec two_type_effect_spec(int n = 10000, std::uint64_t seed = 1, double effect1 = 0.10,
                                    double effect2 = -0.05) {
  DgpSpec s;
  s.name = "two-type-effects";
  s.alphabet = OutcomeAlphabet::generic(2);
  s.params = MarkovMixtureParams::zeros(2, 1, 2, 6, 3, 1e-6);
  // unequal shares keep the ascending-share labels identified
  s.params.pi << 0.4, 0.6;
  const auto k1 = detail::rows({{0.8, 0.2}, {0.3, 0.7}});
  const auto k2 = detail::rows({{0.2, 0.8}, {0.7, 0.3}});
  auto bump = [](Eigen::MatrixXd m, double e) {
    m.col(0).array() += e;
    m.col(1).array() -= e;
    return m;
  };
  s.params.types[0].init_joint = detail::init_table({0.6, 0.4}, {0.6, 0.4});
  s.params.types[1].init_joint = detail::init_table({0.3, 0.7}, {0.5, 0.5});
  for (auto& m : s.params.types[0].control) m = k1;
  for (auto& m : s.params.types[0].treated) m = bump(k1, effect1);
  for (auto& m : s.params.types[1].control) m = k2;
  for (auto& m : s.params.types[1].treated) m = bump(k2, effect2);
  s.n = n;
  s.seed = seed;
  return s;
}

/// Two binary-outcome types whose treatment acts on one flow each: type 1
/// leaves the first category more often (outflow), type 2 enters it more
/// often (inflow).
inline DgpSpec flow_channel_spec(int n = 10000, std::uint64_t seed = 1, double effect = 0.2) {
  DgpSpec s = two_type_effect_spec(n, seed, 0.0, 0.0);
  s.name = "flow-channels";
  for (auto& m : s.params.types[0].treated) {
    m(0, 0) -= effect;
    m(0, 1) += effect;
  }
  for (auto& m : s.params.types[1].treated) {
    m(1, 0) += effect;
    m(1, 1) -= effect;
  }
  return s;
}

/// Deterministic 48-unit two-period panel of the unemployment example.
inline PanelDataset mr_example() {
  PanelInit init;
  init.alphabet = OutcomeAlphabet({"unemployed", "employed"});
  init.num_periods = 2;
  init.num_pre_periods = 1;
  auto add = [&](int count, int d, int y1, int y2) {
    for (int c = 0; c < count; ++c) {
      init.outcomes.push_back(y1);
      init.outcomes.push_back(y2);
      init.treated.push_back(static_cast<std::uint8_t>(d));
    }
  };
  add(12, 1, 1, 1);
  add(9, 1, 0, 1);
  add(3, 1, 0, 0);
  add(6, 0, 1, 1);
  add(12, 0, 0, 1);
  add(6, 0, 0, 0);
  return PanelDataset(std::move(init));
}

}  // namespace transition_att
