/* Copyright 2026 The negunc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


// Cross-run comparison: reads the summary.json written by `evaluate` for
// each run and emits tables (CSV and Markdown), MIG box-plot data with an
// SVG rendering, and correlation, consistency and transfer tables.

#ifndef NEGUNC_REPORT_HPP_
#define NEGUNC_REPORT_HPP_

#include "json.hpp"
#include "negunc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace negunc::report {

namespace fs = std::filesystem;
using nlohmann::json;

// Column order for objective sets; unknown labels follow alphabetically.
inline const std::vector<std::string>& objective_order() {
  static const std::vector<std::string> order = {"ELBO", "+INF", "+INF+ADV", "+INF+MIN", "+INF+ADV+MIN"};
  return order;
}

inline std::vector<std::string> order_labels(std::vector<std::string> labels) {
  const auto& order = objective_order();
  auto rank = [&](const std::string& l) {
    const auto it = std::find(order.begin(), order.end(), l);
    return it == order.end() ? order.size() : static_cast<std::size_t>(it - order.begin());
  };
  std::sort(labels.begin(), labels.end(), [&](const std::string& a, const std::string& b) {
    return rank(a) != rank(b) ? rank(a) < rank(b) : a < b;
  });
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

struct RunSummary {
  fs::path dir;
  json summary;

  const json& meta() const { return summary.at("meta"); }
  std::string label() const { return meta().at("objectives").get<std::string>(); }
  std::uint64_t seed() const { return meta().at("seed").get<std::uint64_t>(); }
  std::string fingerprint() const { return meta().at("data_fingerprint").get<std::string>(); }
  std::string config_hash() const { return meta().at("config_hash").get<std::string>(); }
};

inline RunSummary load_run(const fs::path& dir) {
  const fs::path p = fs::is_directory(dir) ? dir / "summary.json" : dir;
  std::ifstream in(p);
  if (!in) throw ValidationError("no evaluation summary at " + p.string());
  RunSummary r;
  r.dir = dir;
  try {
    in >> r.summary;
    (void)r.label();
    (void)r.seed();
    (void)r.fingerprint();
    (void)r.config_hash();
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + ": malformed evaluation summary: " + e.what());
  }
  return r;
}

// Refuses runs evaluated on different data.
inline void check_fingerprints(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw ValidationError("report: no runs given");
  for (const auto& r : runs) {
    if (r.fingerprint() != runs.front().fingerprint()) {
      throw ValidationError("report: dataset fingerprint " + r.fingerprint() + " of " + r.dir.string() + " differs from " +
                            runs.front().fingerprint() + " of " + runs.front().dir.string());
    }
  }
}

// Linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile: no values");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BoxStats {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline BoxStats box_stats(const std::vector<double>& v) {
  return {v.size(), quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

// MIG values per objective label and factor key, one entry per run.
inline std::map<std::string, std::map<std::string, std::vector<double>>> mig_by_objective(const std::vector<RunSummary>& runs) {
  std::map<std::string, std::map<std::string, std::vector<double>>> out;
  for (const auto& r : runs) {
    for (const char* k : {"n", "u"}) out[r.label()][k].push_back(r.summary.at("mig").at(k).at("mig").get<double>());
  }
  return out;
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

inline std::string boxplot_svg(const std::vector<std::string>& labels,
                               const std::map<std::string, std::map<std::string, std::vector<double>>>& mig) {
  const int panel_w = 120, height = 320, top = 30, bottom = 60, left = 50;
  const int width = left + panel_w * static_cast<int>(labels.size()) + 20;
  const double plot_h = height - top - bottom;
  auto y = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"18\">MIG by objective (blue: negation, orange: uncertainty)</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << width - 20 << "\" y1=\"" << y(v) << "\" y2=\"" << y(v)
        << "\" stroke=\"#ddd\"/><text x=\"" << left - 8 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << fmt(v, 2)
        << "</text>\n";
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x0 = left + panel_w * static_cast<double>(i);
    int slot = 0;
    for (const char* k : {"n", "u"}) {
      const auto it = mig.find(labels[i]);
      if (it == mig.end() || !it->second.count(k)) continue;
      const BoxStats b = box_stats(it->second.at(k));
      const double cx = x0 + 35 + 45 * slot++;
      const char* color = std::string(k) == "n" ? "#1f77b4" : "#ff7f0e";
      svg << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y(b.max) << "\" y2=\"" << y(b.min) << "\" stroke=\"" << color
          << "\"/>\n";
      svg << "<rect x=\"" << cx - 12 << "\" y=\"" << y(b.q3) << "\" width=\"24\" height=\"" << std::max(1.0, y(b.q1) - y(b.q3))
          << "\" fill=\"" << color << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\"/>\n";
      svg << "<line x1=\"" << cx - 12 << "\" x2=\"" << cx + 12 << "\" y1=\"" << y(b.median) << "\" y2=\"" << y(b.median)
          << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
    svg << "<text x=\"" << x0 + panel_w / 2.0 << "\" y=\"" << height - bottom + 20 << "\" text-anchor=\"middle\">" << labels[i]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

// Writes every comparison artifact into `out_dir` and returns report.json.
inline json write_report(const std::vector<RunSummary>& runs, const fs::path& out_dir) {
  check_fingerprints(runs);
  fs::create_directories(out_dir);
  std::vector<std::string> raw_labels;
  for (const auto& r : runs) raw_labels.push_back(r.label());
  const auto labels = order_labels(raw_labels);

  // Informativeness grid: mean over runs sharing an objective set.
  std::ostringstream csv, md;
  csv << "latent,factor,metric";
  md << "| latent | factor | metric |";
  for (const auto& l : labels) {
    csv << ',' << l;
    md << ' ' << l << " |";
  }
  csv << '\n';
  md << "\n|---|---|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) md << "---|";
  md << '\n';
  json grid;
  for (const char* latent : {"n", "u", "c"}) {
    for (const char* factor : {"n", "u"}) {
      for (const char* metric : {"mi", "precision", "recall", "f1"}) {
        csv << latent << ',' << factor << ',' << metric;
        md << "| " << latent << " | " << factor << " | " << metric << " |";
        for (const auto& l : labels) {
          double sum = 0;
          int count = 0;
          for (const auto& r : runs) {
            if (r.label() != l) continue;
            sum += r.summary.at("informativeness").at(latent).at(factor).at(metric).get<double>();
            ++count;
          }
          const double mean = sum / count;
          grid[l][latent][factor][metric] = mean;
          csv << ',' << fmt(mean);
          md << ' ' << fmt(mean, 3) << " |";
        }
        csv << '\n';
        md << '\n';
      }
    }
  }
  write_file(out_dir / "informativeness.csv", csv.str());
  write_file(out_dir / "informativeness.md", md.str());

  const auto mig = mig_by_objective(runs);
  std::ostringstream mig_csv, quart_csv;
  mig_csv << "objectives,seed,config_hash,factor,mig\n";
  for (const auto& r : runs) {
    for (const char* k : {"n", "u"}) {
      mig_csv << r.label() << ',' << r.seed() << ',' << r.config_hash() << ',' << k << ','
              << fmt(r.summary.at("mig").at(k).at("mig").get<double>(), 6) << '\n';
    }
  }
  quart_csv << "objectives,factor,n,min,q1,median,q3,max\n";
  json quartiles;
  for (const auto& l : labels) {
    for (const char* k : {"n", "u"}) {
      const BoxStats b = box_stats(mig.at(l).at(k));
      quart_csv << l << ',' << k << ',' << b.n << ',' << fmt(b.min, 6) << ',' << fmt(b.q1, 6) << ',' << fmt(b.median, 6) << ','
                << fmt(b.q3, 6) << ',' << fmt(b.max, 6) << '\n';
      quartiles[l][k] = {{"n", b.n}, {"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}};
    }
  }
  write_file(out_dir / "mig.csv", mig_csv.str());
  write_file(out_dir / "mig_quartiles.csv", quart_csv.str());
  write_file(out_dir / "mig_boxplot.svg", boxplot_svg(labels, mig));

  std::ostringstream corr, cons, trans;
  corr << "objectives,seed,rho_n_u,rho_c_n_mean,rho_c_n_sd,rho_c_u_mean,rho_c_u_sd\n";
  cons << "objectives,seed,factor,pass,precision,recall,f1\n";
  trans << "objectives,seed,factor,direction,accuracy,attempted\n";
  for (const auto& l : labels) {
    for (const auto& r : runs) {
      if (r.label() != l) continue;
      const auto& c = r.summary.at("correlation");
      corr << l << ',' << r.seed() << ',' << (c.at("n_u").is_null() ? std::string("") : fmt(c.at("n_u").get<double>()))
           << ',' << fmt(c.at("c_n").at("mean").get<double>()) << ',' << fmt(c.at("c_n").at("sd").get<double>()) << ','
           << fmt(c.at("c_u").at("mean").get<double>()) << ',' << fmt(c.at("c_u").at("sd").get<double>()) << '\n';
      if (r.summary.contains("consistency") && !r.summary.at("consistency").empty()) {
        for (const char* k : {"n", "u"}) {
          for (const char* pass : {"pass1", "pass2"}) {
            const auto& s = r.summary.at("consistency").at(k).at(pass);
            cons << l << ',' << r.seed() << ',' << k << ',' << pass << ',' << fmt(s.at("precision").get<double>()) << ','
                 << fmt(s.at("recall").get<double>()) << ',' << fmt(s.at("f1").get<double>()) << '\n';
          }
        }
      }
      if (r.summary.contains("transfer") && !r.summary.at("transfer").empty()) {
        for (const char* k : {"n", "u"}) {
          for (const char* d : {"remove", "add"}) {
            const auto& s = r.summary.at("transfer").at(k).at(d);
            trans << l << ',' << r.seed() << ',' << k << ',' << d << ',' << fmt(s.at("accuracy").get<double>()) << ','
                  << s.at("attempted").get<std::size_t>() << '\n';
          }
        }
      }
    }
  }
  write_file(out_dir / "correlation.csv", corr.str());
  write_file(out_dir / "consistency.csv", cons.str());
  write_file(out_dir / "transfer.csv", trans.str());

  json rep;
  rep["data_fingerprint"] = runs.front().fingerprint();
  rep["objectives"] = labels;
  json run_list = json::array();
  for (const auto& r : runs) {
    run_list.push_back({{"dir", r.dir.string()}, {"objectives", r.label()}, {"seed", r.seed()}, {"config_hash", r.config_hash()}});
  }
  rep["runs"] = run_list;
  rep["informativeness"] = grid;
  rep["mig_quartiles"] = quartiles;
  std::ofstream(out_dir / "report.json") << rep.dump(2) << '\n';
  return rep;
}

}  // namespace negunc::report

#endif  // NEGUNC_REPORT_HPP_
