#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "transition_att/error.hpp"

namespace transition_att {

/// Ordered set of outcome category labels. Index k of a label is its
/// position in the list, so the list order fixes the one-hot layout.
class OutcomeAlphabet {
 public:
  OutcomeAlphabet() = default;

  explicit OutcomeAlphabet(std::vector<std::string> labels)
      : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw Error(ErrorCode::kInvalidAlphabet,
                  "an outcome alphabet needs at least two categories");
    }
    for (std::size_t k = 0; k < labels_.size(); ++k) {
      if (!index_.emplace(labels_[k], static_cast<int>(k)).second) {
        throw Error(ErrorCode::kInvalidAlphabet,
                    "duplicate category label '" + labels_[k] + "'");
      }
    }
  }

  /// Alphabet of `labels` sorted lexicographically (duplicates removed).
  static OutcomeAlphabet sorted(std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return OutcomeAlphabet(std::move(labels));
  }

  /// Labels y0, y1, ... zero-padded so that lexicographic order equals
  /// index order.
  static OutcomeAlphabet generic(int num_categories) {
    const int width = static_cast<int>(std::to_string(num_categories - 1).size());
    std::vector<std::string> labels;
    for (int k = 0; k < num_categories; ++k) {
      std::string digits = std::to_string(k);
      labels.push_back("y" + std::string(width - digits.size(), '0') + digits);
    }
    return OutcomeAlphabet(std::move(labels));
  }

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(int k) const { return labels_.at(static_cast<std::size_t>(k)); }

  std::optional<int> find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int index(std::string_view label) const {
    if (auto k = find(label)) return *k;
    throw Error(ErrorCode::kUnknownLabel,
                "outcome '" + std::string(label) + "' is not in the alphabet");
  }

  bool operator==(const OutcomeAlphabet& other) const {
    return labels_ == other.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

/// One-hot encoding of category `y` in an alphabet of size `num_categories`.
inline std::vector<double> one_hot(int y, int num_categories) {
  if (num_categories < 1 || y < 0 || y >= num_categories) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "category " + std::to_string(y) + " outside [0, " +
                    std::to_string(num_categories) + ")");
  }
  std::vector<double> v(static_cast<std::size_t>(num_categories), 0.0);
  v[static_cast<std::size_t>(y)] = 1.0;
  return v;
}

/// Raw contents of a panel. Periods are 1-based in every public API; the
/// outcome matrix is stored row-major as outcomes[unit * T + (t - 1)].
struct PanelInit {
  OutcomeAlphabet alphabet;
  int num_periods = 0;
  int num_pre_periods = 0;
  std::vector<int> outcomes;
  std::vector<std::uint8_t> treated;
  std::vector<std::string> unit_ids;     // defaults to "1".."n"
  std::vector<std::string> time_labels;  // defaults to "1".."T"
  std::optional<std::vector<std::string>> cluster;
  std::optional<std::vector<int>> cohort;
};

/// Balanced discrete-outcome panel with absorbing treatment. Immutable once
/// constructed.
class PanelDataset {
 public:
  PanelDataset() = default;

  explicit PanelDataset(PanelInit init) : d_(std::move(init)) { validate(); }

  int num_units() const { return static_cast<int>(d_.treated.size()); }
  int num_periods() const { return d_.num_periods; }
  int num_pre_periods() const { return d_.num_pre_periods; }
  int num_post_periods() const { return d_.num_periods - d_.num_pre_periods; }
  int num_categories() const { return d_.alphabet.size(); }
  const OutcomeAlphabet& alphabet() const { return d_.alphabet; }

  /// Outcome index of `unit` at 1-based period `t`.
  int outcome(int unit, int t) const {
    return d_.outcomes[static_cast<std::size_t>(unit) * d_.num_periods + (t - 1)];
  }
  const std::vector<int>& outcomes() const { return d_.outcomes; }

  bool treated(int unit) const { return d_.treated[static_cast<std::size_t>(unit)] != 0; }
  int num_treated() const {
    return static_cast<int>(std::count(d_.treated.begin(), d_.treated.end(), 1));
  }
  int num_control() const { return num_units() - num_treated(); }

  const std::vector<std::string>& unit_ids() const { return d_.unit_ids; }
  const std::vector<std::string>& time_labels() const { return d_.time_labels; }
  const std::optional<std::vector<std::string>>& cluster() const { return d_.cluster; }
  const std::optional<std::vector<int>>& cohort() const { return d_.cohort; }

  /// First treatment period of `unit` (0 when never treated).
  int first_treated_period(int unit) const {
    if (d_.cohort) return (*d_.cohort)[static_cast<std::size_t>(unit)];
    return treated(unit) ? d_.num_pre_periods + 1 : 0;
  }

  /// True when treated units start treatment in more than one period.
  bool is_staggered() const {
    if (!d_.cohort) return false;
    std::set<int> starts;
    for (int g : *d_.cohort) {
      if (g != 0) starts.insert(g);
    }
    return starts.size() > 1;
  }

  /// Copy of the raw contents, for building modified datasets.
  const PanelInit& contents() const { return d_; }

 private:
  void validate();

  PanelInit d_;
};

inline void PanelDataset::validate() {
  const int n = static_cast<int>(d_.treated.size());
  const int T = d_.num_periods;
  const int K = d_.alphabet.size();
  if (K < 2) throw Error(ErrorCode::kInvalidAlphabet, "alphabet is empty");
  if (T < 2) {
    throw Error(ErrorCode::kMalformedInput, "a panel needs at least two periods");
  }
  if (d_.outcomes.size() != static_cast<std::size_t>(n) * T) {
    throw Error(ErrorCode::kUnbalancedPanel,
                "outcome matrix does not hold exactly T outcomes per unit");
  }
  for (int y : d_.outcomes) {
    if (y < 0 || y >= K) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "outcome index " + std::to_string(y) + " outside the alphabet");
    }
  }
  for (auto d : d_.treated) {
    if (d > 1) throw Error(ErrorCode::kMalformedInput, "treatment flag must be 0 or 1");
  }
  if (d_.unit_ids.empty()) {
    for (int i = 0; i < n; ++i) d_.unit_ids.push_back(std::to_string(i + 1));
  }
  if (d_.time_labels.empty()) {
    for (int t = 1; t <= T; ++t) d_.time_labels.push_back(std::to_string(t));
  }
  if (static_cast<int>(d_.unit_ids.size()) != n ||
      static_cast<int>(d_.time_labels.size()) != T) {
    throw Error(ErrorCode::kDimensionMismatch, "unit or time labels have the wrong length");
  }
  if (d_.cluster && static_cast<int>(d_.cluster->size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch, "cluster column has the wrong length");
  }
  if (d_.cohort) {
    if (static_cast<int>(d_.cohort->size()) != n) {
      throw Error(ErrorCode::kDimensionMismatch, "cohort column has the wrong length");
    }
    int first_start = 0;
    for (int i = 0; i < n; ++i) {
      const int g = (*d_.cohort)[static_cast<std::size_t>(i)];
      if (g != 0 && (g < 2 || g > T)) {
        throw Error(ErrorCode::kInvalidCohort,
                    "cohort " + std::to_string(g) + " of unit " + d_.unit_ids[i] +
                        " outside {0} U {2..T}");
      }
      if ((g != 0) != (d_.treated[static_cast<std::size_t>(i)] != 0)) {
        throw Error(ErrorCode::kInvalidCohort,
                    "unit " + d_.unit_ids[i] + ": treated flag disagrees with cohort");
      }
      if (g != 0 && (first_start == 0 || g < first_start)) first_start = g;
    }
    if (first_start != 0 && d_.num_pre_periods != first_start - 1) {
      throw Error(ErrorCode::kInvalidCohort,
                  "pre-period count must equal the earliest cohort minus one");
    }
  }
  if (d_.num_pre_periods < 1 || d_.num_pre_periods >= T) {
    throw Error(ErrorCode::kMalformedInput, "pre-treatment period count must lie in [1, T)");
  }
}

/// Outcome indices of a unit over a window of `lag` periods ending at an
/// anchor period.
struct HistoryKey {
  std::vector<int> states;

  int lag() const { return static_cast<int>(states.size()); }

  /// Base-K integer code, first period most significant.
  int code(int num_categories) const {
    int c = 0;
    for (int s : states) c = c * num_categories + s;
    return c;
  }

  static HistoryKey decode(int code, int lag, int num_categories) {
    HistoryKey key;
    key.states.assign(static_cast<std::size_t>(lag), 0);
    for (int s = lag - 1; s >= 0; --s) {
      key.states[static_cast<std::size_t>(s)] = code % num_categories;
      code /= num_categories;
    }
    return key;
  }

  std::string to_string(const OutcomeAlphabet& alphabet) const {
    std::string out;
    for (std::size_t s = 0; s < states.size(); ++s) {
      if (s) out += '>';
      out += alphabet.label(states[s]);
    }
    return out;
  }

  bool operator==(const HistoryKey&) const = default;
};

inline int ipow(int base, int exp) {
  int r = 1;
  for (int e = 0; e < exp; ++e) r *= base;
  return r;
}

inline void check_history_window(const PanelDataset& data, int anchor, int lag) {
  if (lag < 1) throw Error(ErrorCode::kLagExceedsHistory, "lag must be at least 1");
  if (anchor < 1 || anchor > data.num_periods()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "anchor period " + std::to_string(anchor) + " outside the panel");
  }
  if (lag > anchor) {
    throw Error(ErrorCode::kLagExceedsHistory,
                "lag " + std::to_string(lag) + " exceeds the " + std::to_string(anchor) +
                    " periods observed up to the anchor");
  }
}

/// Integer code of a unit's outcomes over periods anchor-lag+1..anchor.
/// No range checks; callers validate the window once.
inline int history_code(const PanelDataset& data, int unit, int anchor, int lag) {
  const int K = data.num_categories();
  int c = 0;
  for (int t = anchor - lag + 1; t <= anchor; ++t) c = c * K + data.outcome(unit, t);
  return c;
}

inline HistoryKey history_key(const PanelDataset& data, int unit, int anchor, int lag) {
  check_history_window(data, anchor, lag);
  if (unit < 0 || unit >= data.num_units()) {
    throw Error(ErrorCode::kIndexOutOfRange, "unit index outside the panel");
  }
  HistoryKey key;
  for (int t = anchor - lag + 1; t <= anchor; ++t) key.states.push_back(data.outcome(unit, t));
  return key;
}

/// The same panel re-encoded under another ordering of the same labels.
inline PanelDataset with_alphabet(const PanelDataset& data, const OutcomeAlphabet& alphabet) {
  PanelInit init = data.contents();
  for (int& y : init.outcomes) y = alphabet.index(data.alphabet().label(y));
  init.alphabet = alphabet;
  return PanelDataset(std::move(init));
}

/// Sub-panel of the given units, in the given order.
inline PanelDataset subset_units(const PanelDataset& data, const std::vector<int>& units) {
  const PanelInit& src = data.contents();
  PanelInit init;
  init.alphabet = src.alphabet;
  init.num_periods = src.num_periods;
  init.num_pre_periods = src.num_pre_periods;
  init.time_labels = src.time_labels;
  if (src.cluster) init.cluster.emplace();
  if (src.cohort) init.cohort.emplace();
  for (int i : units) {
    for (int t = 1; t <= src.num_periods; ++t) init.outcomes.push_back(data.outcome(i, t));
    init.treated.push_back(src.treated[static_cast<std::size_t>(i)]);
    init.unit_ids.push_back(src.unit_ids[static_cast<std::size_t>(i)]);
    if (src.cluster) init.cluster->push_back((*src.cluster)[static_cast<std::size_t>(i)]);
    if (src.cohort) init.cohort->push_back((*src.cohort)[static_cast<std::size_t>(i)]);
  }
  return PanelDataset(std::move(init));
}

// ---------------------------------------------------------------------------
// CSV long format: unit,time,outcome,treated[,cluster][,cohort]

/// Column names in the input file for each logical column.
struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string treated = "treated";
  std::string cluster = "cluster";
  std::string cohort = "cohort";

  /// Parses "unit=id,time=year,..." overrides.
  static CsvSchema parse(std::string_view spec) {
    CsvSchema schema;
    std::stringstream ss{std::string(spec)};
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::kUsage, "schema entry '" + item + "' is not key=column");
      }
      const std::string key = item.substr(0, eq);
      const std::string value = item.substr(eq + 1);
      if (key == "unit") schema.unit = value;
      else if (key == "time") schema.time = value;
      else if (key == "outcome") schema.outcome = value;
      else if (key == "treated") schema.treated = value;
      else if (key == "cluster") schema.cluster = value;
      else if (key == "cohort") schema.cohort = value;
      else throw Error(ErrorCode::kUsage, "unknown schema key '" + key + "'");
    }
    return schema;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Reads a long-format panel. Categories follow `alphabet` when given, else
/// the sorted distinct labels. Time tokens are sorted numerically when all
/// of them are integers and lexicographically otherwise, then re-indexed
/// 1..T. The treated column is the per-period treatment indicator.
inline PanelDataset read_panel_csv(std::istream& in, const CsvSchema& schema = {},
                                   const std::optional<OutcomeAlphabet>& alphabet = {}) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingColumn, "empty input, no header");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name, bool required) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found");
      return -1;
    }
    return static_cast<int>(it - header.begin());
  };
  const int c_unit = column(schema.unit, true);
  const int c_time = column(schema.time, true);
  const int c_outcome = column(schema.outcome, true);
  const int c_treated = column(schema.treated, true);
  const int c_cluster = column(schema.cluster, false);
  const int c_cohort = column(schema.cohort, false);

  struct Row {
    std::string unit, time, outcome, cluster, cohort;
    int treated;
  };
  std::vector<Row> rows;
  std::vector<std::string> unit_order;
  std::unordered_map<std::string, int> unit_index;
  std::set<std::string> time_tokens;
  std::set<std::string> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::kMalformedInput,
                  "line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    Row r;
    r.unit = f[c_unit];
    r.time = f[c_time];
    r.outcome = f[c_outcome];
    if (f[c_treated] == "0") r.treated = 0;
    else if (f[c_treated] == "1") r.treated = 1;
    else {
      throw Error(ErrorCode::kMalformedInput,
                  "line " + std::to_string(line_no) + ": treated must be 0 or 1");
    }
    if (c_cluster >= 0) r.cluster = f[c_cluster];
    if (c_cohort >= 0) r.cohort = f[c_cohort];
    if (unit_index.emplace(r.unit, static_cast<int>(unit_order.size())).second) {
      unit_order.push_back(r.unit);
    }
    time_tokens.insert(r.time);
    labels.insert(r.outcome);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCode::kMalformedInput, "no observations");

  std::vector<std::string> times(time_tokens.begin(), time_tokens.end());
  bool numeric = true;
  std::vector<long long> numeric_value(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    numeric = numeric && detail::parse_int(times[i], numeric_value[i]);
  }
  if (numeric) {
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return numeric_value[a] < numeric_value[b]; });
    std::vector<std::string> sorted;
    for (auto i : order) sorted.push_back(times[i]);
    times = std::move(sorted);
  }
  std::unordered_map<std::string, int> period_of;
  for (std::size_t i = 0; i < times.size(); ++i) period_of[times[i]] = static_cast<int>(i) + 1;

  const OutcomeAlphabet alpha =
      alphabet ? *alphabet
               : OutcomeAlphabet::sorted(std::vector<std::string>(labels.begin(), labels.end()));
  const int n = static_cast<int>(unit_order.size());
  const int T = static_cast<int>(times.size());

  std::vector<int> outcomes(static_cast<std::size_t>(n) * T, -1);
  std::vector<int> d_it(static_cast<std::size_t>(n) * T, 0);
  std::vector<std::string> cluster(static_cast<std::size_t>(n));
  std::vector<std::string> cohort_token(static_cast<std::size_t>(n));
  std::vector<bool> unit_seen(static_cast<std::size_t>(n), false);
  for (const Row& r : rows) {
    const int i = unit_index[r.unit];
    const int t = period_of[r.time];
    const std::size_t cell = static_cast<std::size_t>(i) * T + (t - 1);
    if (outcomes[cell] != -1) {
      throw Error(ErrorCode::kDuplicateObservation,
                  "unit " + r.unit + " has more than one row at time " + r.time);
    }
    outcomes[cell] = alpha.index(r.outcome);
    d_it[cell] = r.treated;
    if (unit_seen[i]) {
      if ((c_cluster >= 0 && cluster[i] != r.cluster) ||
          (c_cohort >= 0 && cohort_token[i] != r.cohort)) {
        throw Error(ErrorCode::kMalformedInput,
                    "unit " + r.unit + " has time-varying cluster or cohort");
      }
    }
    unit_seen[i] = true;
    cluster[i] = r.cluster;
    cohort_token[i] = r.cohort;
  }
  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= T; ++t) {
      if (outcomes[static_cast<std::size_t>(i) * T + (t - 1)] == -1) {
        throw Error(ErrorCode::kUnbalancedPanel,
                    "unit " + unit_order[i] + " has no observation at time " + times[t - 1]);
      }
    }
  }

  PanelInit init;
  init.alphabet = alpha;
  init.num_periods = T;
  init.outcomes = std::move(outcomes);
  init.unit_ids = unit_order;
  init.time_labels = times;
  init.treated.assign(static_cast<std::size_t>(n), 0);
  std::vector<int> first(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= T; ++t) {
      const int d = d_it[static_cast<std::size_t>(i) * T + (t - 1)];
      if (d == 1 && first[i] == 0) first[i] = t;
      if (d == 0 && first[i] != 0) {
        throw Error(ErrorCode::kNonAbsorbingTreatment,
                    "unit " + unit_order[i] + " leaves treatment at time " + times[t - 1]);
      }
    }
    if (first[i] == 1) {
      throw Error(ErrorCode::kInvalidCohort,
                  "unit " + unit_order[i] + " is treated in the first period");
    }
    init.treated[i] = first[i] != 0 ? 1 : 0;
  }
  int earliest = 0;
  std::set<int> starts;
  for (int g : first) {
    if (g == 0) continue;
    starts.insert(g);
    if (earliest == 0 || g < earliest) earliest = g;
  }
  if (earliest == 0) throw Error(ErrorCode::kNoTreatedUnits, "no unit is ever treated");
  init.num_pre_periods = earliest - 1;
  if (c_cluster >= 0) init.cluster = cluster;
  if (c_cohort >= 0) {
    std::vector<int> cohort(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      long long g = 0;
      if (!detail::parse_int(cohort_token[i], g)) {
        throw Error(ErrorCode::kInvalidCohort, "cohort of unit " + unit_order[i] + " is not an integer");
      }
      if (g != first[i]) {
        throw Error(ErrorCode::kInvalidCohort,
                    "cohort of unit " + unit_order[i] + " disagrees with its first treated period");
      }
      cohort[i] = static_cast<int>(g);
    }
    init.cohort = std::move(cohort);
  } else if (starts.size() > 1) {
    init.cohort = first;
  }
  return PanelDataset(std::move(init));
}

inline PanelDataset load_panel_csv(const std::string& path, const CsvSchema& schema = {},
                                   const std::optional<OutcomeAlphabet>& alphabet = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return read_panel_csv(in, schema, alphabet);
}

/// Normalized long-format rows: units in dataset order, periods ascending,
/// original unit and time tokens, treated as the per-period indicator.
inline void write_panel_csv(const PanelDataset& data, std::ostream& out) {
  const bool has_cluster = data.cluster().has_value();
  const bool has_cohort = data.cohort().has_value();
  out << "unit,time,outcome,treated";
  if (has_cluster) out << ",cluster";
  if (has_cohort) out << ",cohort";
  out << '\n';
  for (int i = 0; i < data.num_units(); ++i) {
    const int g = data.first_treated_period(i);
    for (int t = 1; t <= data.num_periods(); ++t) {
      out << detail::csv_field(data.unit_ids()[i]) << ','
          << detail::csv_field(data.time_labels()[t - 1]) << ','
          << detail::csv_field(data.alphabet().label(data.outcome(i, t))) << ','
          << (g != 0 && t >= g ? 1 : 0);
      if (has_cluster) out << ',' << detail::csv_field((*data.cluster())[i]);
      if (has_cohort) out << ',' << g;
      out << '\n';
    }
  }
}

inline void write_panel_csv(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  write_panel_csv(data, out);
}

}  // namespace transition_att
