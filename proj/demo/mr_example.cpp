// Unemployment example: DiD and transition-independence estimates disagree
// in sign on the same 48 units.
#include <cstdio>

#include "transition_att.hpp"

using namespace transition_att;

int main() {
  const PanelDataset data = mr_example();
  const int employed = data.alphabet().index("employed");

  const auto did = did_att(data);
  const auto ti = ti_att(data, 1);
  const auto bias = did_bias(data, 1);

  std::printf("units %d (treated %d)\n", data.num_units(), data.num_treated());
  std::printf("DiD ATT(employed, t=2)  % .6f\n", did.at(2).effect[employed]);
  std::printf("TI  ATT(employed, t=2)  % .6f\n", ti.at(2).effect[employed]);
  std::printf("DiD bias                % .6f\n", bias.at(2).effect[employed]);

  const auto table = history_contributions(data, 1, 2);
  for (const auto& row : table.rows) {
    std::printf("  history %-12s weight %.3f  effect % .4f\n", row.history.to_string(data.alphabet()).c_str(),
                row.weight, row.effect[employed]);
  }

  const auto flows = flow_decomposition(data, employed, 2);
  for (const auto& c : flows.channels) {
    std::printf("  flow %s: inflow % .4f outflow % .4f\n", data.alphabet().label(c.state).c_str(), c.inflow,
                c.outflow);
  }
  std::printf("  net % .4f\n", flows.net);

  // The population version of the same example.
  const auto truth = true_att(mr_example_spec());
  std::printf("population TI ATT       % .6f\n", truth.aggregate.at(2).effect[employed]);
}
