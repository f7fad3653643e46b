#pragma once

#include <random>
#include <sstream>
#include <string>

#include "transition_att.hpp"

namespace transition_att::fixtures {

inline PanelDataset panel_from_csv(const std::string& text, const CsvSchema& schema = {},
                                   const std::optional<OutcomeAlphabet>& alphabet = {}) {
  std::istringstream in(text);
  return read_panel_csv(in, schema, alphabet);
}

/// Random simultaneous-adoption panel. Arms follow different random
/// kernels before and after T0 and start from different initial laws, so
/// the estimators disagree. Unit 0 is treated and unit 1 is not.
inline PanelDataset random_panel(std::uint64_t seed, int n, int K, int T, int T0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_law = [&] {
    std::vector<double> p(static_cast<std::size_t>(K));
    double s = 0.0;
    for (double& x : p) s += (x = 0.05 + u(rng));
    for (double& x : p) x /= s;
    return p;
  };
  auto draw = [&](const std::vector<double>& p) {
    std::discrete_distribution<int> d(p.begin(), p.end());
    return d(rng);
  };
  std::vector<std::vector<double>> init(2), kernel;  // kernel[(arm*2 + post)*K + from]
  for (auto& p : init) p = random_law();
  for (int c = 0; c < 4 * K; ++c) kernel.push_back(random_law());
  const double share = 0.25 + 0.5 * u(rng);

  PanelInit pi;
  pi.alphabet = OutcomeAlphabet::generic(K);
  pi.num_periods = T;
  pi.num_pre_periods = T0;
  for (int i = 0; i < n; ++i) {
    const int d = i == 0 ? 1 : i == 1 ? 0 : (u(rng) < share ? 1 : 0);
    int y = draw(init[d]);
    pi.outcomes.push_back(y);
    for (int t = 2; t <= T; ++t) {
      const int post = t > T0 ? 1 : 0;
      y = draw(kernel[static_cast<std::size_t>((d * 2 + post) * K + y)]);
      pi.outcomes.push_back(y);
    }
    pi.treated.push_back(static_cast<std::uint8_t>(d));
  }
  return PanelDataset(std::move(pi));
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

/// Small multistart schedule for unit tests.
inline MultistartSchedule quick_schedule() { return MultistartSchedule{60, 4, 10, 1e-6, 500}; }

}  // namespace transition_att::fixtures
