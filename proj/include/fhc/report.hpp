#pragma once
// Rate-distortion report rows, the versioned CSV schema, and a static SVG
// plot of the R-D frontier.

#include <cstdio>
#include <fstream>
#include <map>

#include "fhc/pipeline.hpp"

namespace fhc {

inline constexpr const char* kCsvHeaderLine = "# fhc-rd-report v1";

struct RDRow {
  std::string scheme;      // sq | vq | latent-uq | latent-vq | neural | refinement
  std::string rate_param;  // Q=4 / lambda=500 / a=0.5 / layer=2 ...
  double bits_per_element = 0.0;
  double cr = 0.0;
  double evm_pct = 0.0;
  double evm_db = 0.0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  double wall_s = 0.0;
  std::string config_digest;
  std::string tag;  // e.g. "matched" / "mismatched"
};

inline RDRow make_row(const std::string& scheme, const std::string& rate_param,
                      const EvalResult& r, const RunConfig& cfg, double wall_s,
                      const std::string& tag = "") {
  RDRow row;
  row.scheme = scheme;
  row.rate_param = rate_param;
  row.bits_per_element = r.bits_per_element;
  row.cr = r.cr;
  row.evm_pct = r.evm_pct;
  row.evm_db = r.evm_db;
  row.alpha = r.alpha;
  row.seed = cfg.train.seed;
  row.wall_s = wall_s;
  row.config_digest = config_digest(cfg);
  row.tag = tag;
  return row;
}

inline void write_csv(const std::string& path, const std::vector<RDRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << kCsvHeaderLine << "\n";
  out << "scheme,rate_param,bits_per_element,cr,evm_pct,evm_db,alpha,seed,wall_s,"
         "config_digest,tag\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.4f,%.6f,%llu,%.2f,%s,%s\n",
                  r.scheme.c_str(), r.rate_param.c_str(), r.bits_per_element, r.cr,
                  r.evm_pct, r.evm_db, r.alpha,
                  static_cast<unsigned long long>(r.seed), r.wall_s,
                  r.config_digest.c_str(), r.tag.c_str());
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<RDRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  std::string line;
  std::getline(in, line);
  if (line != kCsvHeaderLine) throw IoError("unexpected CSV schema version: " + path);
  std::getline(in, line);  // column header
  std::vector<RDRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const std::size_t c = line.find(',', pos);
      f.push_back(line.substr(pos, c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (f.size() != 11) throw IoError("malformed CSV row: " + line);
    RDRow r;
    r.scheme = f[0];
    r.rate_param = f[1];
    r.bits_per_element = std::stod(f[2]);
    r.cr = std::stod(f[3]);
    r.evm_pct = std::stod(f[4]);
    r.evm_db = std::stod(f[5]);
    r.alpha = std::stod(f[6]);
    r.seed = std::stoull(f[7]);
    r.wall_s = std::stod(f[8]);
    r.config_digest = f[9];
    r.tag = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

// Static SVG R-D plot: bits/element on x, EVM dB on y, one polyline per
// scheme, points sorted by rate.
inline void write_svg(const std::string& path, const std::vector<RDRow>& rows,
                      const std::string& title) {
  const int w = 760, h = 520, ml = 70, mr = 30, mt = 50, mb = 60;
  double xmin = 1e30, xmax = -1e30, ymin = 1e30, ymax = -1e30;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.bits_per_element);
    xmax = std::max(xmax, r.bits_per_element);
    ymin = std::min(ymin, r.evm_db);
    ymax = std::max(ymax, r.evm_db);
  }
  if (rows.empty()) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  const double xpad = 0.05 * std::max(1e-9, xmax - xmin);
  const double ypad = 0.05 * std::max(1e-9, ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto py = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };

  std::map<std::string, std::vector<const RDRow*>> by_scheme;
  for (const auto& r : rows) by_scheme[r.scheme + (r.tag.empty() ? "" : "/" + r.tag)].push_back(&r);
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "' viewBox='0 0 " << w << " " << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='28' text-anchor='middle' font-size='16' "
         "font-family='sans-serif'>" << title << "</text>\n";
  // Axes.
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='"
      << h - mb << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  char buf[256];
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x='%.1f' y='%d' text-anchor='middle' font-size='11' "
                  "font-family='sans-serif'>%.2f</text>\n",
                  px(xv), h - mb + 18, xv);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x='%d' y='%.1f' text-anchor='end' font-size='11' "
                  "font-family='sans-serif'>%.1f</text>\n",
                  ml - 8, py(yv) + 4, yv);
    out << buf;
  }
  out << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 16
      << "' text-anchor='middle' font-size='13' font-family='sans-serif'>bits per "
         "element</text>\n";
  out << "<text x='18' y='" << (mt + h - mb) / 2
      << "' text-anchor='middle' font-size='13' font-family='sans-serif' "
         "transform='rotate(-90 18 " << (mt + h - mb) / 2 << ")'>EVM (dB)</text>\n";

  int ci = 0;
  int ly = mt;
  for (auto& [scheme, pts] : by_scheme) {
    const char* color = colors[ci++ % 8];
    std::vector<const RDRow*> sorted = pts;
    std::sort(sorted.begin(), sorted.end(), [](const RDRow* a, const RDRow* b) {
      return a->bits_per_element < b->bits_per_element;
    });
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto* p : sorted) out << px(p->bits_per_element) << "," << py(p->evm_db) << " ";
    out << "'/>\n";
    for (const auto* p : sorted) {
      std::snprintf(buf, sizeof(buf), "<circle cx='%.1f' cy='%.1f' r='3.2' fill='%s'/>\n",
                    px(p->bits_per_element), py(p->evm_db), color);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<rect x='%d' y='%d' width='10' height='10' fill='%s'/>"
                  "<text x='%d' y='%d' font-size='11' font-family='sans-serif'>%s</text>\n",
                  w - mr - 170, ly, color, w - mr - 155, ly + 9, scheme.c_str());
    out << buf;
    ly += 16;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fhc
