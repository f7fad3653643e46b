#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "transition_att/error.hpp"
#include "transition_att/inference.hpp"
#include "transition_att/json_io.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/staggered.hpp"

namespace transition_att {

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

/// Named in-memory artifacts of one subcommand run.
struct Report {
  std::string subcommand;
  std::vector<std::pair<std::string, std::string>> files;  // name, content

  void add_json(const Json& j) { add(subcommand + ".json", j.dump(2) + "\n"); }
  void add_csv(const std::string& content) { add(subcommand + ".csv", content); }
  void add(std::string name, std::string content) {
    if (content.empty() || content.back() != '\n') content += '\n';
    files.emplace_back(std::move(name), std::move(content));
  }
};

struct ManifestEntry {
  std::string file;
  std::size_t bytes = 0;
  std::string sha256;
};

/// Writes every file of `report` under `out_dir` plus manifest.json listing
/// each file with its size and SHA-256.
inline std::vector<ManifestEntry> emit_report(const Report& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + out_dir + "': " + ec.message());
  std::vector<ManifestEntry> manifest;
  auto write = [&](const std::string& name, const std::string& content) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  };
  for (const auto& [name, content] : report.files) {
    write(name, content);
    manifest.push_back(ManifestEntry{name, content.size(), sha256_hex(content)});
  }
  std::sort(manifest.begin(), manifest.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.file < b.file; });
  Json m;
  m["subcommand"] = report.subcommand;
  Json files = Json::array();
  for (const auto& e : manifest) files.push_back(Json{{"file", e.file}, {"bytes", e.bytes}, {"sha256", e.sha256}});
  m["files"] = std::move(files);
  write("manifest.json", m.dump(2) + "\n");
  return manifest;
}

namespace csv {

inline std::string contributions(const PanelDataset& data, const std::vector<ContributionTable>& tables) {
  std::ostringstream out;
  out << "history,weight";
  for (const auto& l : data.alphabet().labels()) out << ",effect_" << detail::csv_field(l);
  out << ",t,treated_share,treated_count,control_count\n";
  for (const auto& tab : tables) {
    for (const auto& r : tab.rows) {
      out << detail::csv_field(r.history.to_string(data.alphabet())) << ',' << format_number(r.weight);
      for (double e : r.effect) out << ',' << format_number(e);
      out << ',' << tab.period << ',' << format_number(r.treated_share) << ',' << format_number(r.treated_count)
          << ',' << format_number(r.control_count) << '\n';
    }
  }
  return out.str();
}

inline std::string flows(const PanelDataset& data, const std::vector<FlowDecomposition>& fds) {
  std::ostringstream out;
  out << "type,period,channel,direction,effect\n";
  for (const auto& fd : fds) {
    const std::string type = fd.type ? std::to_string(*fd.type + 1) : "all";
    for (const auto& c : fd.channels) {
      const std::string ch = detail::csv_field(data.alphabet().label(c.state));
      out << type << ',' << fd.period << ',' << ch << ",inflow," << format_number(c.inflow) << '\n';
      out << type << ',' << fd.period << ',' << ch << ",outflow," << format_number(c.outflow) << '\n';
    }
  }
  return out.str();
}

inline std::string pretrends(const PanelDataset& data, const std::vector<PreTrendReport>& reports) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string("NA"); };
  out << "type,period,from,to,p_treated,p_control,difference\n";
  for (const auto& r : reports) {
    const std::string type = r.type ? std::to_string(*r.type + 1) : "all";
    for (const auto& c : r.cells) {
      out << type << ',' << c.period << ',' << detail::csv_field(data.alphabet().label(c.from)) << ','
          << detail::csv_field(data.alphabet().label(c.to)) << ',' << opt(c.p_treated) << ',' << opt(c.p_control)
          << ',' << opt(c.difference) << '\n';
    }
  }
  return out.str();
}

inline std::string staggered(const PanelDataset& data, const CohortEffectTable& table) {
  std::ostringstream out;
  out << "g,t,category,att,n_treated,n_control,mode\n";
  for (const auto& c : table.entries) {
    for (int k = 0; k < data.num_categories(); ++k) {
      out << c.cohort << ',' << c.period << ',' << detail::csv_field(data.alphabet().label(k)) << ','
          << format_number(c.effect[k]) << ',' << c.num_treated << ',' << c.num_control << ','
          << mode_name(table.mode) << '\n';
    }
  }
  return out.str();
}

inline std::string staggered_aggregate(const PanelDataset& data, const CohortEffectTable& table) {
  std::ostringstream out;
  out << "t,category,att\n";
  for (const auto& a : table.aggregate) {
    for (int k = 0; k < data.num_categories(); ++k) {
      out << a.period << ',' << detail::csv_field(data.alphabet().label(k)) << ',' << format_number(a.effect[k])
          << '\n';
    }
  }
  return out.str();
}

/// One labeled band row per coordinate.
struct BandRow {
  std::string series;
  int period = 0;
  std::string category;
  BandCoordinate coord;
  double crit = 0.0;
};

inline std::string bands(const std::vector<BandRow>& rows) {
  std::ostringstream out;
  out << "series,period,category,estimate,se,pw_lo,pw_hi,unif_lo,unif_hi,crit_value\n";
  for (const auto& r : rows) {
    const auto& c = r.coord;
    out << r.series << ',' << r.period << ',' << detail::csv_field(r.category) << ',' << format_number(c.estimate)
        << ',' << format_number(c.se) << ',' << format_number(c.pointwise_lo) << ','
        << format_number(c.pointwise_hi) << ',' << format_number(c.uniform_lo) << ','
        << format_number(c.uniform_hi) << ',' << format_number(r.crit) << '\n';
  }
  return out.str();
}

inline std::string draws(const BootstrapDraws& d) {
  std::ostringstream out;
  out << "replicate";
  for (int c = 0; c < d.dim(); ++c) out << ",theta_" << c;
  out << '\n';
  for (int r = 0; r < d.draws.rows(); ++r) {
    out << d.replicate_index[r];
    for (int c = 0; c < d.dim(); ++c) out << ',' << format_number(d.draws(r, c));
    out << '\n';
  }
  return out.str();
}

}  // namespace csv

}  // namespace transition_att
