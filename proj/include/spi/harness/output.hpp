#pragma once

// CSV (RFC 4180), SVG line plots and git-style content hashes.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace spi::harness {

/// Shortest 17-significant-digit decimal that parses back to the same double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

/// Compact label for file names (0.1 -> "0.1").
inline std::string short_number(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return x;
}

using CsvRow = std::vector<std::string>;

inline std::string csv_field(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv_row(std::ostream& os, const CsvRow& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << csv_field(row[i]);
  }
  os << "\r\n";
}

inline std::string to_csv(const CsvRow& header, const std::vector<CsvRow>& rows) {
  std::ostringstream os;
  write_csv_row(os, header);
  for (const auto& r : rows) write_csv_row(os, r);
  return os.str();
}

/// Parses RFC 4180 text (header included as the first row).
inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw std::invalid_argument("parse_csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
inline std::string git_blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// --------------------------------------------------------------------------
// SVG
// --------------------------------------------------------------------------

/// Indices of the plotted points: every floor(N/1000)-th step when the series
/// spans N >= 1000 steps (exactly 1000 points), otherwise all of them.
inline std::vector<std::size_t> plot_indices(std::size_t n_points, std::size_t target = 1000) {
  std::vector<std::size_t> idx;
  if (n_points == 0) return idx;
  const std::size_t n_steps = n_points - 1;
  if (n_steps >= target) {
    const std::size_t stride = n_steps / target;
    for (std::size_t k = 0; k < target; ++k) idx.push_back(k * stride);
  } else {
    for (std::size_t i = 0; i < n_points; ++i) idx.push_back(i);
  }
  return idx;
}

inline std::vector<double> nice_ticks(double lo, double hi, int want = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / want;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

inline std::string tick_label(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<':
        o += "&lt;";
        break;
      case '>':
        o += "&gt;";
        break;
      case '&':
        o += "&amp;";
        break;
      case '"':
        o += "&quot;";
        break;
      default:
        o += c;
    }
  }
  return o;
}

/// Single polyline plot with axis ticks. Non-finite values are skipped.
inline std::string svg_line_plot(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel) {
  const double W = 800, H = 500, ml = 90, mr = 20, mt = 40, mb = 60;
  const auto idx = plot_indices(x.size());
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (auto i : idx) {
    if (!std::isfinite(y[i])) continue;
    x0 = std::min(x0, x[i]);
    x1 = std::max(x1, x[i]);
    y0 = std::min(y0, y[i]);
    y1 = std::max(y1, y[i]);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    const double pad = y0 == 0.0 ? 1.0 : std::abs(y0) * 0.1;
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb); };
  std::ostringstream os;
  os << std::setprecision(7);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
     << "</text>\n";
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\"/>\n";
  for (double t : nice_ticks(x0, x1))
    os << "<line x1=\"" << px(t) << "\" y1=\"" << H - mb << "\" x2=\"" << px(t) << "\" y2=\"" << H - mb + 5 << "\"/>\n";
  for (double t : nice_ticks(y0, y1))
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(t) << "\" x2=\"" << ml << "\" y2=\"" << py(t) << "\"/>\n";
  os << "</g>\n<g font-size=\"11\">\n";
  for (double t : nice_ticks(x0, x1))
    os << "<text x=\"" << px(t) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << tick_label(t)
       << "</text>\n";
  for (double t : nice_ticks(y0, y1))
    os << "<text x=\"" << ml - 8 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  os << "</g>\n"
     << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-size=\"13\">"
     << xml_escape(xlabel) << "</text>\n"
     << "<text x=\"20\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 20 "
     << (mt + H - mb) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1\" points=\"";
  bool first = true;
  for (auto i : idx) {
    if (!std::isfinite(y[i])) continue;
    if (!first) os << ' ';
    first = false;
    os << px(x[i]) << ',' << py(y[i]);
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

/// Number of vertices in the first polyline of an SVG document.
inline std::size_t svg_point_count(const std::string& svg) {
  const auto p = svg.find("points=\"");
  if (p == std::string::npos) return 0;
  const auto e = svg.find('"', p + 8);
  const std::string pts = svg.substr(p + 8, e - p - 8);
  if (pts.empty()) return 0;
  return static_cast<std::size_t>(std::count(pts.begin(), pts.end(), ' ')) + 1;
}

}  // namespace spi::harness
