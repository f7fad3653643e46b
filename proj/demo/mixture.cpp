// Fits a two-type Markov mixture to a simulated panel and compares the
// type-specific effects with the truth.
#include <cstdio>

#include "transition_att.hpp"

using namespace transition_att;

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 10000;
  const DgpSpec spec = two_type_effect_spec(n, 11);
  const auto sim = simulate(spec);
  const auto& data = sim.data;

  MultistartSchedule schedule;
  schedule.n_short = 200;
  schedule.n_long = 5;
  const auto selection = select_num_types(data, 1, 3, schedule, 5);
  for (const auto& row : selection.rows) {
    std::printf("J=%d loglik %.2f params %lld BIC %.2f\n", row.num_types, row.loglik, row.num_params, row.bic);
  }
  std::printf("chosen J=%d\n", selection.chosen);

  const EmFit fit = multistart_fit(data, 2, 1, schedule, 5);
  const auto effects = mixture_effects(data, fit.posteriors, 1);
  const auto truth = true_att(spec);
  std::printf("pi hat %.3f %.3f\n", fit.params.pi[0], fit.params.pi[1]);
  for (int j = 0; j < 2; ++j) {
    std::printf("type %d  weight %.3f (true %.3f)\n", j + 1, effects.weights[j], truth.weights[j]);
    for (const auto& p : effects.types[j].periods) {
      std::printf("  t=%d  LTATT[0] % .4f  true % .4f\n", p.period, p.effect[0],
                  truth.types[j].at(p.period).effect[0]);
    }
  }
  for (const auto& p : effects.aggregate.periods) {
    std::printf("aggregate t=%d % .4f  true % .4f\n", p.period, p.effect[0], truth.aggregate.at(p.period).effect[0]);
  }
}
