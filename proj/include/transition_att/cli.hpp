#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "transition_att/dgp.hpp"
#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/inference.hpp"
#include "transition_att/json_io.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/mixture_effects.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/report.hpp"
#include "transition_att/staggered.hpp"

namespace transition_att::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitIo = 74;

struct RunConfig {
  std::string input;
  std::string schema;
  std::string alphabet;
  int lag = 1;
  int types = 1;
  double eps = 1e-6;
  int n_short = 6000;
  int n_long = 20;
  int short_iters = 10;
  double tol = 1e-3;
  int max_iter = 100;
  int bootstrap_B = 500;
  double alpha = 0.05;
  bool cluster = false;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string empty_cell = "error";
  std::string mode = "never";
  std::string out = "out";
  int max_types = 3;
  std::string focal;
  int period = 0;
  std::string spec;
  int n = 0;
  bool dump_draws = false;
  int topup = 50;
  bool full_schedule = false;
};

namespace detail {

/// One config key: its flag, help text, and how it binds to the config.
struct Field {
  std::string key;
  std::string help;
  std::function<void(CLI::App*, RunConfig&)> add;
  std::function<void(const Json&, RunConfig&)> from_json;
};

template <typename T>
Field field(std::string key, std::string help, T RunConfig::*member) {
  Field f;
  f.key = key;
  f.help = help;
  f.add = [key, help, member](CLI::App* app, RunConfig& cfg) {
    if constexpr (std::is_same_v<T, bool>) {
      app->add_flag("--" + key, cfg.*member, help)->capture_default_str();
    } else {
      app->add_option("--" + key, cfg.*member, help)->capture_default_str();
    }
  };
  f.from_json = [key, member](const Json& j, RunConfig& cfg) {
    try {
      cfg.*member = j.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kUsage, "config key '" + key + "' has the wrong type");
    }
  };
  return f;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field("input", "input panel CSV (long format)", &RunConfig::input),
      field("schema", "column mapping, e.g. unit=id,time=year", &RunConfig::schema),
      field("alphabet", "outcome labels in category order, comma separated (default: sorted)", &RunConfig::alphabet),
      field("lag", "Markov order / history length", &RunConfig::lag),
      field("types", "number of latent types J", &RunConfig::types),
      field("eps", "probability floor for fitted parameters", &RunConfig::eps),
      field("n-short", "multistart: number of short runs", &RunConfig::n_short),
      field("n-long", "multistart: runs continued to convergence", &RunConfig::n_long),
      field("short-iters", "multistart: iterations per short run", &RunConfig::short_iters),
      field("tol", "EM tolerance on the log-likelihood change", &RunConfig::tol),
      field("max-iter", "EM iteration cap for long runs", &RunConfig::max_iter),
      field("bootstrap-B", "bootstrap replicates", &RunConfig::bootstrap_B),
      field("alpha", "band level (1 - coverage)", &RunConfig::alpha),
      field("cluster", "draw bootstrap weights per cluster", &RunConfig::cluster),
      field("seed", "base seed (falls back to TRANSITION_ATT_SEED)", &RunConfig::seed),
      field("workers", "worker threads", &RunConfig::workers),
      field("empty-cell", "history cells without comparison units: error|drop", &RunConfig::empty_cell),
      field("mode", "staggered control group: never|not_yet|both", &RunConfig::mode),
      field("out", "output directory (simulate: output CSV path)", &RunConfig::out),
      field("max-types", "largest J tried by select-types", &RunConfig::max_types),
      field("focal", "focal category label for flows (default: first category)", &RunConfig::focal),
      field("period", "post period index for flows (default: first post period)", &RunConfig::period),
      field("spec", "simulation spec: JSON file or built-in name", &RunConfig::spec),
      field("n", "simulated unit count (0 keeps the spec's)", &RunConfig::n),
      field("dump-draws", "also write every bootstrap draw", &RunConfig::dump_draws),
      field("topup", "bootstrap: short random starts added to the warm start", &RunConfig::topup),
      field("full-schedule", "bootstrap: full multistart per replicate", &RunConfig::full_schedule),
  };
  return all;
}

inline const std::map<std::string, std::vector<std::string>>& subcommand_keys() {
  static const std::vector<std::string> data = {"input", "schema", "alphabet", "out"};
  static const std::vector<std::string> fit = {"lag", "types", "eps", "n-short", "n-long", "short-iters",
                                               "tol", "max-iter", "seed", "workers", "empty-cell"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"validate", data},
      {"did", data},
      {"att", join({data, fit})},
      {"mixture", join({data, fit})},
      {"select-types", join({data, fit, {"max-types"}})},
      {"bootstrap", join({data, fit, {"bootstrap-B", "alpha", "cluster", "dump-draws", "topup", "full-schedule"}})},
      {"pretest", join({data, fit})},
      {"placebo", join({data, {"lag", "empty-cell"}})},
      {"flows", join({data, fit, {"focal", "period"}})},
      {"staggered", join({data, {"lag", "mode", "empty-cell"}})},
      {"simulate", {"spec", "n", "seed", "workers", "out"}},
  };
  return keys;
}

inline const std::map<std::string, std::string>& subcommand_help() {
  static const std::map<std::string, std::string> help = {
      {"validate", "check and summarize an input panel"},
      {"did", "difference-in-differences ATT"},
      {"att", "ATT under transition independence (mixture of types when --types > 1)"},
      {"mixture", "fit the latent-type Markov mixture and type-specific ATTs"},
      {"select-types", "choose the number of latent types by BIC"},
      {"bootstrap", "weighted bootstrap standard errors and uniform bands"},
      {"pretest", "pre-treatment transition differences (per type when --types > 1)"},
      {"placebo", "placebo ATT at the last pre-treatment period"},
      {"flows", "inflow/outflow decomposition of the one-lag ATT"},
      {"staggered", "cohort ATTs under staggered adoption"},
      {"simulate", "simulate a panel from a spec and write it as CSV"},
  };
  return help;
}

/// Applies a JSON config file; returns the keys it set.
inline std::set<std::string> apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUsage, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kUsage, "config must be a JSON object");
  std::set<std::string> keys;
  for (const auto& [key, value] : j.items()) {
    const auto& all = fields();
    auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.key == key; });
    if (it == all.end()) throw Error(ErrorCode::kUsage, "unknown config key '" + key + "'");
    it->from_json(value, cfg);
    keys.insert(key);
  }
  return keys;
}

inline EmptyCellPolicy parse_policy(const std::string& s) {
  if (s == "error") return EmptyCellPolicy::kError;
  if (s == "drop") return EmptyCellPolicy::kDrop;
  throw Error(ErrorCode::kUsage, "empty-cell must be error or drop, got '" + s + "'");
}

inline std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

inline PanelDataset load_input(const RunConfig& cfg) {
  if (cfg.input.empty()) throw Error(ErrorCode::kUsage, "--input is required");
  std::optional<OutcomeAlphabet> alphabet;
  if (!cfg.alphabet.empty()) alphabet = OutcomeAlphabet(split_labels(cfg.alphabet));
  return load_panel_csv(cfg.input, CsvSchema::parse(cfg.schema), alphabet);
}

inline EstimationConfig estimation(const RunConfig& cfg) {
  if (cfg.types < 1) throw Error(ErrorCode::kUsage, "--types must be at least 1");
  if (cfg.n_short < 1 || cfg.n_long < 1 || cfg.n_long > cfg.n_short || cfg.short_iters < 1 || cfg.max_iter < 1) {
    throw Error(ErrorCode::kUsage, "multistart needs 1 <= n-long <= n-short and positive iteration counts");
  }
  if (cfg.workers < 1) throw Error(ErrorCode::kUsage, "--workers must be at least 1");
  if (!(cfg.eps >= 0.0 && cfg.eps < 0.5)) throw Error(ErrorCode::kUsage, "--eps must lie in [0, 0.5)");
  EstimationConfig ec;
  ec.num_types = cfg.types;
  ec.lag = cfg.lag;
  ec.eps = cfg.eps;
  ec.schedule = MultistartSchedule{cfg.n_short, cfg.n_long, cfg.short_iters, cfg.tol, cfg.max_iter};
  ec.cells.policy = parse_policy(cfg.empty_cell);
  ec.full_schedule = cfg.full_schedule;
  ec.topup.n_short = cfg.topup;
  ec.topup.n_long = std::max(1, std::min(2, cfg.topup));
  ec.topup.tol = cfg.tol;
  ec.topup.max_iter = cfg.max_iter;
  return ec;
}

inline std::string fixed(double x, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << (std::abs(x) < 0.5 * std::pow(10.0, -digits) ? 0.0 : x);
  return ss.str();
}

/// Plain aligned table.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  void print(std::ostream& out) const {
    std::vector<std::size_t> width;
    for (const auto& r : rows_) {
      width.resize(std::max(width.size(), r.size()), 0);
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        out << std::left << std::setw(static_cast<int>(width[c])) << r[c] << (c + 1 < r.size() ? "  " : "");
      }
      out << '\n';
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

inline void print_series(std::ostream& out, const PanelDataset& data, const std::string& title,
                         const EffectSeries& s, const std::string& layer = "") {
  out << title << '\n';
  Table t(layer.empty() ? std::vector<std::string>{"t", "category", "effect", "counterfactual"}
                        : std::vector<std::string>{"layer", "t", "category", "effect", "counterfactual"});
  for (const auto& p : s.periods) {
    for (int k = 0; k < data.num_categories(); ++k) {
      std::vector<std::string> row;
      if (!layer.empty()) row.push_back(layer);
      row.push_back(data.time_labels()[p.period - 1]);
      row.push_back(data.alphabet().label(k));
      row.push_back(fixed(p.effect[k]));
      row.push_back(p.counterfactual.empty() ? "-" : fixed(p.counterfactual[k]));
      t.add(std::move(row));
    }
  }
  t.print(out);
}

inline Json config_json(const RunConfig& cfg, const std::string& sub) {
  Json j;
  for (const auto& key : subcommand_keys().at(sub)) {
    if (key == "out") continue;
    if (key == "input") j[key] = cfg.input;
    else if (key == "schema") j[key] = cfg.schema;
    else if (key == "alphabet") j[key] = cfg.alphabet;
    else if (key == "lag") j[key] = cfg.lag;
    else if (key == "types") j[key] = cfg.types;
    else if (key == "eps") j[key] = cfg.eps;
    else if (key == "n-short") j[key] = cfg.n_short;
    else if (key == "n-long") j[key] = cfg.n_long;
    else if (key == "short-iters") j[key] = cfg.short_iters;
    else if (key == "tol") j[key] = cfg.tol;
    else if (key == "max-iter") j[key] = cfg.max_iter;
    else if (key == "bootstrap-B") j[key] = cfg.bootstrap_B;
    else if (key == "alpha") j[key] = cfg.alpha;
    else if (key == "cluster") j[key] = cfg.cluster;
    else if (key == "seed") j[key] = cfg.seed;
    else if (key == "empty-cell") j[key] = cfg.empty_cell;
    else if (key == "mode") j[key] = cfg.mode;
    else if (key == "max-types") j[key] = cfg.max_types;
    else if (key == "focal") j[key] = cfg.focal;
    else if (key == "period") j[key] = cfg.period;
    else if (key == "spec") j[key] = cfg.spec;
    else if (key == "n") j[key] = cfg.n;
    else if (key == "topup") j[key] = cfg.topup;
    else if (key == "full-schedule") j[key] = cfg.full_schedule;
  }
  return j;
}

// Subcommand bodies. Each fills a report and prints a summary.

inline void cmd_validate(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  Json j;
  j["n"] = data.num_units();
  j["T"] = data.num_periods();
  j["T0"] = data.num_pre_periods();
  j["K"] = data.num_categories();
  j["alphabet"] = data.alphabet().labels();
  j["time_labels"] = data.time_labels();
  j["num_treated"] = data.num_treated();
  j["num_control"] = data.num_control();
  j["staggered"] = data.is_staggered();
  const auto gs = cohorts(data);
  j["cohorts"] = std::vector<int>(gs.begin(), gs.end());
  j["has_cluster"] = data.cluster().has_value();
  rep.add_json(j);
  std::ostringstream csv;
  write_panel_csv(data, csv);
  rep.add_csv(csv.str());
  Table t({"units", "periods", "pre-periods", "categories", "treated", "control", "staggered"});
  t.add({std::to_string(data.num_units()), std::to_string(data.num_periods()), std::to_string(data.num_pre_periods()),
         std::to_string(data.num_categories()), std::to_string(data.num_treated()), std::to_string(data.num_control()),
         data.is_staggered() ? "yes" : "no"});
  out << "panel is valid\n";
  t.print(out);
}

inline void cmd_did(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto s = did_att(data);
  rep.add_json(effect_series_json(data, s));
  print_series(out, data, "DiD ATT (base period " + data.time_labels()[data.num_pre_periods() - 1] + ")", s);
}

inline void cmd_mixture_like(const RunConfig& cfg, Report& rep, std::ostream& out, bool full) {
  const auto data = load_input(cfg);
  const auto ec = estimation(cfg);
  if (ec.num_types == 1 && !full) {
    const auto s = ti_att(data, ec.lag, ec.cells);
    Json j = effect_series_json(data, s);
    rep.add_json(j);
    std::vector<ContributionTable> tabs;
    for (int t = data.num_pre_periods() + 1; t <= data.num_periods(); ++t) {
      tabs.push_back(history_contributions(data, ec.lag, t, ec.cells));
    }
    rep.add_csv(csv::contributions(data, tabs));
    print_series(out, data, "TI ATT, lag " + std::to_string(ec.lag), s);
    return;
  }
  const auto pe = estimate_point(data, ec, cfg.seed, cfg.workers);
  Json j;
  j["fit"] = fit_json(data, pe.fit);
  j["effects"] = mixture_effects_json(data, pe.effects);
  rep.add_json(j);
  out << "mixture fit: J=" << ec.num_types << ", lag " << ec.lag << ", loglik " << fixed(pe.fit.loglik(), 3)
      << ", BIC " << fixed(bic(data, pe.fit), 3) << ", iterations " << pe.fit.iterations << '\n';
  Table w({"type", "pi", "treated share"});
  for (int t = 0; t < ec.num_types; ++t) {
    w.add({std::to_string(t + 1), fixed(pe.fit.params.pi[t]), fixed(pe.effects.weights[t])});
  }
  w.print(out);
  for (const auto& s : pe.effects.types) print_series(out, data, "", s, "type " + std::to_string(*s.type + 1));
  print_series(out, data, "aggregate ATT", pe.effects.aggregate);
  for (const auto& msg : pe.fit.warnings) out << "warning: " << msg << '\n';
}

inline void cmd_select(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto ec = estimation(cfg);
  if (cfg.max_types < 1) throw Error(ErrorCode::kUsage, "--max-types must be at least 1");
  MultistartOptions mo;
  mo.workers = cfg.workers;
  mo.eps = ec.eps;
  const auto sel = select_num_types(data, ec.lag, cfg.max_types, ec.schedule, cfg.seed, mo);
  Json j;
  j["chosen"] = sel.chosen;
  Json rows = Json::array();
  std::ostringstream csv;
  csv << "J,loglik,num_params,bic\n";
  Table t({"J", "loglik", "params", "BIC"});
  for (const auto& r : sel.rows) {
    rows.push_back(Json{{"J", r.num_types}, {"loglik", r.loglik}, {"num_params", r.num_params}, {"bic", r.bic}});
    csv << r.num_types << ',' << format_number(r.loglik) << ',' << r.num_params << ',' << format_number(r.bic) << '\n';
    t.add({std::to_string(r.num_types), fixed(r.loglik, 3), std::to_string(r.num_params), fixed(r.bic, 3)});
  }
  j["rows"] = std::move(rows);
  rep.add_json(j);
  rep.add_csv(csv.str());
  t.print(out);
  out << "selected J = " << sel.chosen << '\n';
}

inline void cmd_bootstrap(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto ec = estimation(cfg);
  const auto pe = estimate_point(data, ec, cfg.seed, cfg.workers);
  BootstrapOptions bo;
  bo.B = cfg.bootstrap_B;
  bo.seed = cfg.seed;
  bo.workers = cfg.workers;
  bo.cluster = cfg.cluster;
  const auto draws = run_bootstrap(data, ec, pe, bo);
  const int J = ec.num_types;
  const int P = data.num_post_periods();
  const int K = data.num_categories();
  std::vector<csv::BandRow> rows;
  Json series = Json::array();
  for (int layer = 0; layer <= J; ++layer) {
    const std::string name = layer == J ? "aggregate" : "type" + std::to_string(layer + 1);
    for (int k = 0; k < K; ++k) {
      const auto coords = series_coordinates(J, P, K, layer, k);
      const auto bands = uniform_bands(draws, cfg.alpha, coords);
      Json sj;
      sj["series"] = name;
      sj["category"] = data.alphabet().label(k);
      sj["crit_value"] = bands.critical_value;
      Json pts = Json::array();
      for (std::size_t s = 0; s < bands.coords.size(); ++s) {
        const auto& c = bands.coords[s];
        const int t = data.num_pre_periods() + 1 + static_cast<int>(s);
        rows.push_back(csv::BandRow{name, t, data.alphabet().label(k), c, bands.critical_value});
        pts.push_back(Json{{"t", t},
                           {"estimate", c.estimate},
                           {"se", c.se},
                           {"pw_lo", c.pointwise_lo},
                           {"pw_hi", c.pointwise_hi},
                           {"unif_lo", c.uniform_lo},
                           {"unif_hi", c.uniform_hi}});
      }
      sj["points"] = std::move(pts);
      series.push_back(std::move(sj));
    }
  }
  Json j;
  j["B"] = draws.B;
  j["failures"] = draws.failures;
  j["seed"] = draws.seed;
  j["alpha"] = cfg.alpha;
  j["cluster"] = cfg.cluster;
  j["theta_hat"] = draws.theta_hat;
  j["sigma"] = draws.sigma;
  j["min_pi_gap"] = draws.min_pi_gap;
  j["series"] = std::move(series);
  rep.add_json(j);
  rep.add_csv(csv::bands(rows));
  if (cfg.dump_draws) rep.add("bootstrap.draws.csv", csv::draws(draws));
  out << "bootstrap: B=" << draws.B << ", failures " << draws.failures << ", alpha " << cfg.alpha << '\n';
  Table t({"series", "t", "category", "estimate", "se", "uniform band"});
  for (const auto& r : rows) {
    if (r.series != "aggregate") continue;
    t.add({r.series, data.time_labels()[r.period - 1], r.category, fixed(r.coord.estimate), fixed(r.coord.se),
           "[" + fixed(r.coord.uniform_lo) + ", " + fixed(r.coord.uniform_hi) + "]"});
  }
  t.print(out);
}

inline void cmd_pretest(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto ec = estimation(cfg);
  std::vector<PreTrendReport> reports;
  if (ec.num_types == 1) {
    reports.push_back(pre_transition_differences(data));
  } else {
    const auto pe = estimate_point(data, ec, cfg.seed, cfg.workers);
    reports = type_pre_transitions(data, pe.fit.posteriors);
  }
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(pretrend_json(data, r));
  rep.add_json(Json{{"reports", std::move(arr)}});
  rep.add_csv(csv::pretrends(data, reports));
  if (reports.front().insufficient_pre_periods) {
    out << "fewer than two pre-treatment periods: no transitions to compare\n";
    return;
  }
  Table t({"type", "t", "from", "to", "treated", "control", "difference"});
  auto opt = [](const std::optional<double>& x) { return x ? fixed(*x) : std::string("NA"); };
  for (const auto& r : reports) {
    for (const auto& c : r.cells) {
      t.add({r.type ? std::to_string(*r.type + 1) : "all", data.time_labels()[c.period - 1],
             data.alphabet().label(c.from), data.alphabet().label(c.to), opt(c.p_treated), opt(c.p_control),
             opt(c.difference)});
    }
  }
  t.print(out);
}

inline void cmd_placebo(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  CellOptions cells;
  cells.policy = parse_policy(cfg.empty_cell);
  const auto eff = placebo_att(data, cfg.lag, cells);
  const int T0 = data.num_pre_periods();
  rep.add_json(Json{{"lag", cfg.lag}, {"t", T0}, {"time", data.time_labels()[T0 - 1]},
                    {"categories", data.alphabet().labels()}, {"effect", eff}});
  out << "placebo ATT at " << data.time_labels()[T0 - 1] << ", lag " << cfg.lag << '\n';
  Table t({"category", "effect"});
  for (int k = 0; k < data.num_categories(); ++k) t.add({data.alphabet().label(k), fixed(eff[k])});
  t.print(out);
}

inline void cmd_flows(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto ec = estimation(cfg);
  const int focal = cfg.focal.empty() ? 0 : data.alphabet().index(cfg.focal);
  const int t = cfg.period == 0 ? data.num_pre_periods() + 1 : cfg.period;
  std::vector<FlowDecomposition> fds;
  Json j;
  if (ec.num_types == 1) {
    fds.push_back(flow_decomposition(data, focal, t));
  } else {
    auto ec1 = ec;
    ec1.lag = 1;
    const auto pe = estimate_point(data, ec1, cfg.seed, cfg.workers);
    for (int k = 0; k < ec.num_types; ++k) fds.push_back(type_flow_decomposition(data, pe.fit.posteriors, k, focal, t));
    j["weights"] = pe.effects.weights;
  }
  Json arr = Json::array();
  for (const auto& fd : fds) arr.push_back(flow_json(data, fd));
  j["decompositions"] = std::move(arr);
  rep.add_json(j);
  rep.add_csv(csv::flows(data, fds));
  out << "flows into/out of " << data.alphabet().label(focal) << " at " << data.time_labels()[t - 1] << '\n';
  Table tab({"type", "state", "inflow", "outflow"});
  for (const auto& fd : fds) {
    for (const auto& c : fd.channels) {
      tab.add({fd.type ? std::to_string(*fd.type + 1) : "all", data.alphabet().label(c.state), fixed(c.inflow),
               fixed(c.outflow)});
    }
    tab.add({fd.type ? std::to_string(*fd.type + 1) : "all", "net", fixed(fd.net), ""});
  }
  tab.print(out);
}

inline void cmd_staggered(const RunConfig& cfg, Report& rep, std::ostream& out) {
  const auto data = load_input(cfg);
  CellOptions cells;
  cells.policy = parse_policy(cfg.empty_cell);
  const auto table = staggered_effects(data, cfg.lag, parse_mode(cfg.mode), cells);
  rep.add_json(staggered_json(data, table));
  rep.add_csv(csv::staggered(data, table));
  rep.add("staggered.aggregate.csv", csv::staggered_aggregate(data, table));
  out << "cohort ATTs, controls: " << cfg.mode << '\n';
  Table t({"g", "t", "category", "att", "n_treated", "n_control"});
  for (const auto& c : table.entries) {
    for (int k = 0; k < data.num_categories(); ++k) {
      t.add({data.time_labels()[c.cohort - 1], data.time_labels()[c.period - 1], data.alphabet().label(k),
             fixed(c.effect[k]), std::to_string(c.num_treated), std::to_string(c.num_control)});
    }
  }
  t.print(out);
}

inline DgpSpec builtin_spec(const std::string& name) {
  if (name == "mr-example") return mr_example_spec();
  if (name == "separated") return separated_spec();
  if (name == "null") return null_spec();
  if (name == "staggered") return staggered_spec();
  if (name == "two-type-effects") return two_type_effect_spec();
  if (name == "flow-channels") return flow_channel_spec();
  throw Error(ErrorCode::kUsage, "spec '" + name + "' is neither a file nor a built-in spec");
}

inline void cmd_simulate(const RunConfig& cfg, bool seed_given, std::ostream& out) {
  if (cfg.spec.empty()) throw Error(ErrorCode::kUsage, "--spec is required");
  DgpSpec spec = std::filesystem::exists(cfg.spec) ? load_spec(cfg.spec) : builtin_spec(cfg.spec);
  if (cfg.n > 0) spec.n = cfg.n;
  if (cfg.n < 0) throw Error(ErrorCode::kUsage, "--n must be positive");
  if (seed_given) spec.seed = cfg.seed;
  const auto sim = simulate(spec, cfg.workers);
  write_panel_csv(sim.data, cfg.out);
  out << "simulated " << sim.data.num_units() << " units x " << sim.data.num_periods() << " periods from '"
      << spec.name << "' (seed " << spec.seed << ") -> " << cfg.out << '\n';
}

inline int exit_code(ErrorCode c) {
  if (c == ErrorCode::kUsage) return kExitUsage;
  if (c == ErrorCode::kIo) return kExitIo;
  return is_validation_error(c) ? kExitValidation : kExitEstimation;
}

}  // namespace detail

/// Runs one CLI invocation; args exclude the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  bool seed_given = false;
  try {
    if (const char* env = std::getenv("TRANSITION_ATT_SEED")) {
      try {
        cfg.seed = std::stoull(env);
        seed_given = true;
      } catch (const std::exception&) {
        throw Error(ErrorCode::kUsage, "TRANSITION_ATT_SEED must be a non-negative integer");
      }
    }
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (!path.empty() && detail::apply_config_file(path, cfg).count("seed")) seed_given = true;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::exit_code(e.code());
  }

  CLI::App app{"Treatment effects on discrete-outcome panels under transition independence", "transition-att"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  std::string config_path;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, keys] : detail::subcommand_keys()) {
    CLI::App* sub = app.add_subcommand(name, detail::subcommand_help().at(name));
    sub->add_option("--config", config_path, "JSON file with any of the keys below; flags override it");
    for (const auto& f : detail::fields()) {
      if (std::find(keys.begin(), keys.end(), f.key) != keys.end()) f.add(sub, cfg);
    }
    subs[name] = sub;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << '\n';
    return kExitUsage;
  }

  std::string name;
  for (const auto& [n, sub] : subs) {
    if (sub->parsed()) name = n;
  }
  if (const auto* opt = subs.at(name)->get_option_no_throw("--seed"); opt && opt->count() > 0) seed_given = true;
  Report rep;
  rep.subcommand = name;
  try {
    if (name == "simulate") {
      detail::cmd_simulate(cfg, seed_given, out);
      return kExitOk;
    }
    if (name == "validate") detail::cmd_validate(cfg, rep, out);
    else if (name == "did") detail::cmd_did(cfg, rep, out);
    else if (name == "att") detail::cmd_mixture_like(cfg, rep, out, false);
    else if (name == "mixture") detail::cmd_mixture_like(cfg, rep, out, true);
    else if (name == "select-types") detail::cmd_select(cfg, rep, out);
    else if (name == "bootstrap") detail::cmd_bootstrap(cfg, rep, out);
    else if (name == "pretest") detail::cmd_pretest(cfg, rep, out);
    else if (name == "placebo") detail::cmd_placebo(cfg, rep, out);
    else if (name == "flows") detail::cmd_flows(cfg, rep, out);
    else if (name == "staggered") detail::cmd_staggered(cfg, rep, out);
    rep.add("config.json", detail::config_json(cfg, name).dump(2) + "\n");
    emit_report(rep, cfg.out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: MalformedInput: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace transition_att::cli
