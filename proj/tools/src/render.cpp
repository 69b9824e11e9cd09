#include "render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include "archsim/io/files.hpp"

namespace archsim::cli {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

bool numeric(const std::string& s, double& out) {
  if (s.empty() || s == "NA") return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

constexpr double kFont = 11.0;

}  // namespace

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string to_csv(const Table& t) {
  std::ostringstream out;
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << csv_cell(t.header[i]);
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json to_json(const Table& t) {
  nlohmann::ordered_json j;
  j["title"] = t.title;
  j["columns"] = t.header;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json r;
    for (std::size_t i = 0; i < row.size() && i < t.header.size(); ++i) {
      double v;
      if (!row[i].empty() && row[i].find_first_not_of("0123456789") == std::string::npos && row[i].size() < 19)
        r[t.header[i]] = std::stoll(row[i]);
      else if (numeric(row[i], v))
        r[t.header[i]] = v;
      else if (row[i] == "NA")
        r[t.header[i]] = nullptr;
      else
        r[t.header[i]] = row[i];
    }
    j["rows"].push_back(std::move(r));
  }
  return j;
}

std::string to_svg(const Table& t) {
  std::vector<std::size_t> width(t.header.size(), 0);
  auto grow = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
  };
  grow(t.header);
  for (const auto& r : t.rows) grow(r);
  const double char_w = 6.6, row_h = 16.0, pad = 10.0;
  std::vector<double> x{pad};
  for (auto w : width) x.push_back(x.back() + static_cast<double>(w) * char_w + 14.0);
  const double w = x.back() + pad, h = pad * 2 + row_h * static_cast<double>(t.rows.size() + 2);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
    << "\" font-family=\"monospace\" font-size=\"" << kFont << "\">\n";
  s << "<text x=\"" << fmt(pad) << "\" y=\"" << fmt(pad + 12) << "\" font-weight=\"bold\">" << escape_xml(t.title)
    << "</text>\n";
  auto line = [&](const std::vector<std::string>& row, double y, bool bold) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      s << "<text x=\"" << fmt(x[i]) << "\" y=\"" << fmt(y) << "\"" << (bold ? " font-weight=\"bold\"" : "") << ">"
        << escape_xml(row[i]) << "</text>\n";
    }
  };
  line(t.header, pad + 12 + row_h, true);
  for (std::size_t r = 0; r < t.rows.size(); ++r) line(t.rows[r], pad + 12 + row_h * static_cast<double>(r + 2), false);
  s << "</svg>\n";
  return s.str();
}

std::string heatmap_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& values) {
  const std::size_t n = labels.size();
  std::size_t longest = 0;
  for (const auto& l : labels) longest = std::max(longest, l.size());
  const double cell = 18.0, margin = 10.0 + 6.6 * static_cast<double>(longest), top = 30.0 + margin;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& row : values)
    for (double v : row)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!(hi > lo)) hi = lo + 1.0;
  const double size = cell * static_cast<double>(n);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(margin + size + 20) << "\" height=\""
    << fmt(top + size + 30) << "\" font-family=\"monospace\" font-size=\"" << kFont << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-weight=\"bold\">" << escape_xml(title) << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(i) * cell + cell * 0.7;
    s << "<text x=\"" << fmt(margin - 4) << "\" y=\"" << fmt(top + c) << "\" text-anchor=\"end\">"
      << escape_xml(labels[i]) << "</text>\n";
    s << "<text transform=\"translate(" << fmt(margin + c) << "," << fmt(top - 4)
      << ") rotate(-90)\">" << escape_xml(labels[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i][j];
      if (!std::isfinite(v)) continue;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - (v - lo) / (hi - lo))));
      s << "<rect x=\"" << fmt(margin + static_cast<double>(j) * cell) << "\" y=\""
        << fmt(top + static_cast<double>(i) * cell) << "\" width=\"" << fmt(cell) << "\" height=\"" << fmt(cell)
        << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"><title>" << escape_xml(labels[i]) << " / "
        << escape_xml(labels[j]) << ": " << short_number(v) << "</title></rect>\n";
    }
  s << "<text x=\"" << fmt(margin) << "\" y=\"" << fmt(top + size + 20) << "\">range " << short_number(lo) << " .. "
    << short_number(hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars) {
  std::size_t longest = 0;
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    longest = std::max(longest, b.label.size());
    lo = std::min(lo, b.value);
    hi = std::max(hi, b.value);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double label_w = 10.0 + 6.6 * static_cast<double>(longest), plot_w = 360.0, row_h = 18.0, top = 34.0;
  const double zero = label_w + plot_w * (0.0 - lo) / (hi - lo);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(label_w + plot_w + 80) << "\" height=\""
    << fmt(top + row_h * static_cast<double>(bars.size()) + 10) << "\" font-family=\"monospace\" font-size=\"" << kFont
    << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-weight=\"bold\">" << escape_xml(title) << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row_h * static_cast<double>(i);
    const double end = label_w + plot_w * (bars[i].value - lo) / (hi - lo);
    s << "<text x=\"" << fmt(label_w - 4) << "\" y=\"" << fmt(y + 12) << "\" text-anchor=\"end\">"
      << escape_xml(bars[i].label) << "</text>\n";
    s << "<rect x=\"" << fmt(std::min(zero, end)) << "\" y=\"" << fmt(y + 2) << "\" width=\""
      << fmt(std::abs(end - zero)) << "\" height=\"" << fmt(row_h - 4) << "\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << fmt(std::max(zero, end) + 4) << "\" y=\"" << fmt(y + 12) << "\">"
      << short_number(bars[i].value) << "</text>\n";
  }
  s << "<line x1=\"" << fmt(zero) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(zero) << "\" y2=\""
    << fmt(top + row_h * static_cast<double>(bars.size())) << "\" stroke=\"black\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<Point>& points) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (points.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const double left = 60, top = 34, w = 360, h = 240;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(left + w + 20) << "\" height=\"" << fmt(top + h + 40)
    << "\" font-family=\"monospace\" font-size=\"" << kFont << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-weight=\"bold\">" << escape_xml(title) << "</text>\n";
  s << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& p : points) {
    s << "<circle cx=\"" << fmt(left + w * (p.x - x0) / (x1 - x0)) << "\" cy=\""
      << fmt(top + h - h * (p.y - y0) / (y1 - y0)) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(top + h + 16) << "\">" << short_number(x0) << "</text>\n";
  s << "<text x=\"" << fmt(left + w) << "\" y=\"" << fmt(top + h + 16) << "\" text-anchor=\"end\">" << short_number(x1)
    << "</text>\n";
  s << "<text x=\"" << fmt(left + w / 2) << "\" y=\"" << fmt(top + h + 32) << "\" text-anchor=\"middle\">"
    << escape_xml(x_label) << "</text>\n";
  s << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(top + h) << "\" text-anchor=\"end\">" << short_number(y0)
    << "</text>\n";
  s << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(top + 10) << "\" text-anchor=\"end\">" << short_number(y1)
    << "</text>\n";
  s << "<text transform=\"translate(14," << fmt(top + h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape_xml(y_label) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string stack_svg(const std::vector<std::string>& documents) {
  static const std::regex size_re(R"re(width="([0-9.]+)" height="([0-9.]+)")re");
  double width = 0.0, y = 0.0;
  std::ostringstream body;
  for (const auto& doc : documents) {
    std::smatch m;
    double w = 0.0, h = 0.0;
    if (std::regex_search(doc, m, size_re)) {
      w = std::stod(m[1]);
      h = std::stod(m[2]);
    }
    body << "<g transform=\"translate(0," << fmt(y) << ")\">\n" << doc << "</g>\n";
    width = std::max(width, w);
    y += h + 10.0;
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(y) << "\">\n"
    << body.str() << "</svg>\n";
  return s.str();
}

}  // namespace archsim::cli
