#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "transition_att/dgp.hpp"
#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/inference.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/mixture_effects.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/staggered.hpp"

namespace transition_att {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd json_matrix(const Json& j, int rows, int cols, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw Error(ErrorCode::kMalformedInput, what + ": expected " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw Error(ErrorCode::kMalformedInput, what + ": expected " + std::to_string(cols) + " columns");
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw Error(ErrorCode::kMalformedInput, what + ": non-numeric entry");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

template <typename T>
T get_field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kMalformedInput, std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kMalformedInput, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Json params_to_json(const MarkovMixtureParams& p) {
  Json j;
  j["J"] = p.num_types;
  j["ell"] = p.lag;
  j["K"] = p.num_categories;
  j["T"] = p.num_periods;
  j["T0"] = p.num_pre_periods;
  j["eps"] = p.eps;
  j["pi"] = std::vector<double>(p.pi.data(), p.pi.data() + p.pi.size());
  Json types = Json::array();
  for (int t = 0; t < p.num_types; ++t) {
    Json tj;
    tj["init_joint"] = detail::matrix_json(p.types[t].init_joint);
    Json ck = Json::object(), tk = Json::object();
    for (int s = p.lag + 1; s <= p.num_periods; ++s) ck[std::to_string(s)] = detail::matrix_json(p.control_kernel(t, s));
    for (int s = p.num_pre_periods + 1; s <= p.num_periods; ++s) {
      tk[std::to_string(s)] = detail::matrix_json(p.treated_kernel(t, s));
    }
    tj["control_kernel"] = std::move(ck);
    tj["treated_kernel"] = std::move(tk);
    types.push_back(std::move(tj));
  }
  j["types"] = std::move(types);
  return j;
}

/// Parses parameters; when a type carries `initial` and `selection` instead
/// of `init_joint`, the joint table is their product.
inline MarkovMixtureParams params_from_json(const Json& j) {
  const int J = detail::get_field<int>(j, "J");
  const int lag = detail::get_field<int>(j, "ell");
  const int K = detail::get_field<int>(j, "K");
  const int T = detail::get_field<int>(j, "T");
  const int T0 = detail::get_field<int>(j, "T0");
  const double eps = j.contains("eps") ? detail::get_field<double>(j, "eps") : 1e-6;
  if (J < 1 || lag < 1 || K < 2 || T0 < lag || T <= T0 || J > 64 || T > 1000) {
    throw Error(ErrorCode::kMalformedInput, "inconsistent parameter dimensions");
  }
  if (std::pow(static_cast<double>(K), lag) > 1e6) throw Error(ErrorCode::kMalformedInput, "history space too large");
  auto p = MarkovMixtureParams::zeros(J, lag, K, T, T0, eps);
  const auto pi = detail::get_field<std::vector<double>>(j, "pi");
  if (static_cast<int>(pi.size()) != J) throw Error(ErrorCode::kMalformedInput, "pi needs J entries");
  for (int t = 0; t < J; ++t) p.pi[t] = pi[t];
  const auto& types = j.at("types");
  if (!types.is_array() || static_cast<int>(types.size()) != J) {
    throw Error(ErrorCode::kMalformedInput, "types needs J entries");
  }
  const int H = p.num_histories();
  for (int t = 0; t < J; ++t) {
    const auto& tj = types[static_cast<std::size_t>(t)];
    if (tj.contains("init_joint")) {
      p.types[t].init_joint = detail::json_matrix(tj.at("init_joint"), H, 2, "init_joint");
    } else {
      const auto initial = detail::get_field<std::vector<double>>(tj, "initial");
      const auto selection = detail::get_field<std::vector<double>>(tj, "selection");
      if (static_cast<int>(initial.size()) != H || static_cast<int>(selection.size()) != H) {
        throw Error(ErrorCode::kMalformedInput, "initial and selection need K^ell entries");
      }
      p.types[t].init_joint = detail::init_table(initial, selection);
    }
    const auto& ck = tj.at("control_kernel");
    const auto& tk = tj.at("treated_kernel");
    for (int s = lag + 1; s <= T; ++s) {
      const auto key = std::to_string(s);
      if (!ck.contains(key)) throw Error(ErrorCode::kMalformedInput, "control kernel for period " + key + " missing");
      p.control_kernel(t, s) = detail::json_matrix(ck.at(key), H, K, "control_kernel");
    }
    for (int s = T0 + 1; s <= T; ++s) {
      const auto key = std::to_string(s);
      if (!tk.contains(key)) throw Error(ErrorCode::kMalformedInput, "treated kernel for period " + key + " missing");
      p.treated_kernel(t, s) = detail::json_matrix(tk.at(key), H, K, "treated_kernel");
    }
  }
  p.validate(1e-9);
  return p;
}

inline Json spec_to_json(const DgpSpec& s) {
  Json j;
  j["name"] = s.name;
  j["alphabet"] = s.alphabet.labels();
  j["n"] = s.n;
  j["seed"] = s.seed;
  j["params"] = params_to_json(s.params);
  Json sel = Json::array();
  for (int t = 0; t < s.params.num_types; ++t) {
    Json row = Json::array();
    for (int h = 0; h < s.params.num_histories(); ++h) {
      const double x = s.selection(t, h);
      row.push_back(std::isnan(x) ? Json(nullptr) : Json(x));
    }
    sel.push_back(std::move(row));
  }
  j["selection"] = std::move(sel);
  j["cohorts"] = s.cohort_list();
  j["cohort_shares"] = s.cohort_weights();
  if (!s.cohort_kernels.empty()) {
    Json ck = Json::array();
    for (const auto& set : s.cohort_kernels) {
      Json by_t = Json::array();
      for (const auto& m : set) by_t.push_back(detail::matrix_json(m));
      ck.push_back(std::move(by_t));
    }
    j["cohort_kernels"] = std::move(ck);
  }
  return j;
}

inline DgpSpec spec_from_json(const Json& j) {
  static const std::vector<std::string> known = {"name",   "alphabet",  "n",         "seed",          "params",
                                                 "selection", "cohorts", "cohort_shares", "cohort_kernels"};
  if (!j.is_object()) throw Error(ErrorCode::kMalformedInput, "spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kMalformedInput, "unknown spec key '" + key + "'");
    }
  }
  DgpSpec s;
  s.name = j.value("name", std::string("custom"));
  s.params = params_from_json(j.at("params"));
  s.alphabet = j.contains("alphabet") ? OutcomeAlphabet(detail::get_field<std::vector<std::string>>(j, "alphabet"))
                                      : OutcomeAlphabet::generic(s.params.num_categories);
  if (j.contains("n")) s.n = detail::get_field<int>(j, "n");
  if (j.contains("seed")) s.seed = detail::get_field<std::uint64_t>(j, "seed");
  if (j.contains("cohorts")) s.cohorts = detail::get_field<std::vector<int>>(j, "cohorts");
  if (j.contains("cohort_shares")) s.cohort_shares = detail::get_field<std::vector<double>>(j, "cohort_shares");
  if (j.contains("cohort_kernels")) {
    const int H = s.params.num_histories();
    const int K = s.params.num_categories;
    for (const auto& set : j.at("cohort_kernels")) {
      std::vector<Eigen::MatrixXd> by_t;
      for (const auto& m : set) by_t.push_back(detail::json_matrix(m, H, K, "cohort_kernels"));
      if (static_cast<int>(by_t.size()) != s.params.num_periods - s.params.num_pre_periods) {
        throw Error(ErrorCode::kMalformedInput, "cohort kernels need one table per post period");
      }
      s.cohort_kernels.push_back(std::move(by_t));
    }
  }
  s.validate();
  return s;
}

inline DgpSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("spec is not valid JSON: ") + e.what());
  }
  return spec_from_json(j);
}

inline Json period_json(const PanelDataset& data, const PeriodEffect& p) {
  Json j;
  j["t"] = p.period;
  j["time"] = data.time_labels()[p.period - 1];
  j["effect"] = p.effect;
  j["counterfactual"] = p.counterfactual;
  j["observed"] = p.observed;
  j["dropped_mass"] = p.dropped_mass;
  return j;
}

inline Json periods_json(const PanelDataset& data, const EffectSeries& s) {
  Json arr = Json::array();
  for (const auto& p : s.periods) arr.push_back(period_json(data, p));
  return arr;
}

inline Json effect_series_json(const PanelDataset& data, const EffectSeries& s) {
  Json j;
  j["method"] = method_name(s.method);
  j["lag"] = s.lag;
  j["categories"] = data.alphabet().labels();
  j["periods"] = periods_json(data, s);
  return j;
}

inline Json mixture_effects_json(const PanelDataset& data, const MixtureEffects& me) {
  Json j;
  j["categories"] = data.alphabet().labels();
  j["weights"] = me.weights;
  Json types = Json::array();
  for (const auto& s : me.types) {
    Json tj;
    tj["j"] = *s.type + 1;
    tj["periods"] = periods_json(data, s);
    types.push_back(std::move(tj));
  }
  j["types"] = std::move(types);
  j["aggregate"] = Json{{"periods", periods_json(data, me.aggregate)}};
  return j;
}

inline Json fit_json(const PanelDataset& data, const EmFit& fit) {
  Json j;
  j["loglik"] = fit.loglik();
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["bic"] = bic(data, fit);
  j["num_params"] = num_free_parameters(fit.params.num_types, fit.params.lag, fit.params.num_categories,
                                        fit.params.num_periods, fit.params.num_pre_periods);
  j["warnings"] = fit.warnings;
  j["params"] = params_to_json(fit.params);
  return j;
}

inline Json flow_json(const PanelDataset& data, const FlowDecomposition& fd) {
  Json j;
  if (fd.type) j["type"] = *fd.type + 1;
  j["focal"] = data.alphabet().label(fd.focal);
  j["t"] = fd.period;
  Json ch = Json::array();
  for (const auto& c : fd.channels) {
    ch.push_back(Json{{"state", data.alphabet().label(c.state)}, {"inflow", c.inflow}, {"outflow", c.outflow}});
  }
  j["channels"] = std::move(ch);
  j["net"] = fd.net;
  j["att"] = fd.att;
  j["residual"] = fd.residual;
  return j;
}

inline Json pretrend_json(const PanelDataset& data, const PreTrendReport& r) {
  Json j;
  if (r.type) j["type"] = *r.type + 1;
  j["insufficient_pre_periods"] = r.insufficient_pre_periods;
  Json cells = Json::array();
  auto opt = [](const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); };
  for (const auto& c : r.cells) {
    cells.push_back(Json{{"t", c.period},
                         {"from", data.alphabet().label(c.from)},
                         {"to", data.alphabet().label(c.to)},
                         {"p_treated", opt(c.p_treated)},
                         {"p_control", opt(c.p_control)},
                         {"difference", opt(c.difference)},
                         {"weight_treated", c.row_treated},
                         {"weight_control", c.row_control}});
  }
  j["cells"] = std::move(cells);
  return j;
}

inline Json staggered_json(const PanelDataset& data, const CohortEffectTable& table) {
  Json j;
  j["mode"] = mode_name(table.mode);
  j["lag"] = table.lag;
  j["categories"] = data.alphabet().labels();
  Json entries = Json::array();
  for (const auto& c : table.entries) {
    Json partial = Json::array();
    for (const auto& h : c.partial_support) partial.push_back(h.to_string(data.alphabet()));
    entries.push_back(Json{{"g", c.cohort},
                           {"t", c.period},
                           {"controls", c.controls},
                           {"effect", c.effect},
                           {"counterfactual", c.counterfactual},
                           {"n_treated", c.num_treated},
                           {"n_control", c.num_control},
                           {"dropped_mass", c.dropped_mass},
                           {"partial_support", std::move(partial)}});
  }
  j["entries"] = std::move(entries);
  Json agg = Json::array();
  for (const auto& a : table.aggregate) {
    agg.push_back(Json{{"t", a.period}, {"cohorts", a.cohorts}, {"weights", a.weights}, {"effect", a.effect}});
  }
  j["aggregate"] = std::move(agg);
  return j;
}

}  // namespace transition_att
