#include "countfit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace countfit::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  if (std::fabs(v) < 1e-12) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double nice_step(double span) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  const double m = r < 1.5 ? 1.0 : r < 3.0 ? 2.0 : r < 7.0 ? 5.0 : 10.0;
  return m * mag;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.2;

  static Axis fit(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) lo = 0.0, hi = 1.0;
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    Axis a;
    a.step = nice_step(hi - lo);
    a.lo = std::floor(lo / a.step) * a.step;
    a.hi = std::ceil(hi / a.step) * a.step;
    return a;
  }
};

void header(std::ostringstream& out, const std::string& title, const std::string& data_csv) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(kWidth)
      << "\" height=\"" << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth) << " " << fmt(kHeight)
      << "\">\n"
      << "<metadata><![CDATA[" << data_csv << "]]></metadata>\n"
      << "<title>" << escape(title) << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << escape(title) << "</text>\n";
}

void axis_labels(std::ostringstream& out, const std::string& x_label, const std::string& y_label) {
  out << "<text x=\"" << fmt(kLeft + kPlotW / 2) << "\" y=\"" << fmt(kHeight - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label)
      << "</text>\n"
      << "<text x=\"18\" y=\"" << fmt(kTop + kPlotH / 2) << "\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 "
      << fmt(kTop + kPlotH / 2) << ")\">" << escape(y_label) << "</text>\n"
      << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(kPlotW)
      << "\" height=\"" << fmt(kPlotH) << "\" fill=\"none\" stroke=\"black\"/>\n";
}

void y_ticks(std::ostringstream& out, const Axis& y) {
  const int n = static_cast<int>(std::lround((y.hi - y.lo) / y.step));
  for (int i = 0; i <= n; ++i) {
    const double v = y.lo + i * y.step;
    const double py = kTop + kPlotH - (v - y.lo) / (y.hi - y.lo) * kPlotH;
    out << "<line x1=\"" << fmt(kLeft - 4) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(kLeft)
        << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << fmt(kLeft - 7) << "\" y=\"" << fmt(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << tick_label(v)
        << "</text>\n";
  }
}

void annotations(std::ostringstream& out, const std::vector<std::string>& lines) {
  double y = kTop + 16;
  for (const auto& line : lines) {
    out << "<text x=\"" << fmt(kLeft + kPlotW - 8) << "\" y=\"" << fmt(y)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << escape(line)
        << "</text>\n";
    y += 15;
  }
}

void legend(std::ostringstream& out, const std::vector<Series>& series) {
  double y = kTop + 14;
  for (const auto& s : series) {
    out << "<rect x=\"" << fmt(kLeft + 10) << "\" y=\"" << fmt(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << s.color << "\"/>\n"
        << "<text x=\"" << fmt(kLeft + 25) << "\" y=\"" << fmt(y) << "\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << escape(s.name) << "</text>\n";
    y += 15;
  }
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

std::string render(const ScatterChart& c) {
  double xlo = std::numeric_limits<double>::infinity();
  double xhi = -xlo;
  double ylo = xlo;
  double yhi = -xlo;
  for (const auto& s : c.series) {
    for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
  }
  if (c.identity_line) {
    xlo = ylo = std::min(xlo, ylo);
    xhi = yhi = std::max(xhi, yhi);
  }
  const auto ax = Axis::fit(xlo, xhi);
  const auto ay = Axis::fit(ylo, yhi);
  auto px = [&](double v) { return kLeft + (v - ax.lo) / (ax.hi - ax.lo) * kPlotW; };
  auto py = [&](double v) { return kTop + kPlotH - (v - ay.lo) / (ay.hi - ay.lo) * kPlotH; };

  std::ostringstream out;
  header(out, c.title, c.data_csv);
  axis_labels(out, c.x_label, c.y_label);
  y_ticks(out, ay);
  const int nx = static_cast<int>(std::lround((ax.hi - ax.lo) / ax.step));
  for (int i = 0; i <= nx; ++i) {
    const double v = ax.lo + i * ax.step;
    out << "<line x1=\"" << fmt(px(v)) << "\" y1=\"" << fmt(kTop + kPlotH) << "\" x2=\"" << fmt(px(v))
        << "\" y2=\"" << fmt(kTop + kPlotH + 4) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << fmt(px(v)) << "\" y=\"" << fmt(kTop + kPlotH + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << tick_label(v)
        << "</text>\n";
  }
  if (c.identity_line) {
    const double lo = std::max(ax.lo, ay.lo);
    const double hi = std::min(ax.hi, ay.hi);
    out << "<line x1=\"" << fmt(px(lo)) << "\" y1=\"" << fmt(py(lo)) << "\" x2=\"" << fmt(px(hi))
        << "\" y2=\"" << fmt(py(hi)) << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (const auto& s : c.series) {
    out << "<g fill=\"" << s.color << "\" fill-opacity=\"0.6\">\n";
    const auto n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      out << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i])) << "\" r=\"2.5\"/>\n";
    }
    out << "</g>\n";
  }
  if (c.series.size() > 1) legend(out, c.series);
  annotations(out, c.annotations);
  out << "</svg>\n";
  return out.str();
}

std::string render(const BarChart& c) {
  double yhi = 0.0;
  for (const auto& g : c.groups) {
    for (double v : g.y) yhi = std::max(yhi, v);
  }
  const auto ay = Axis::fit(0.0, yhi > 0.0 ? yhi : 1.0);
  auto py = [&](double v) { return kTop + kPlotH - (v - ay.lo) / (ay.hi - ay.lo) * kPlotH; };

  std::ostringstream out;
  header(out, c.title, c.data_csv);
  axis_labels(out, c.x_label, c.y_label);
  y_ticks(out, ay);
  const auto n_cat = std::max<std::size_t>(c.categories.size(), 1);
  const double slot = kPlotW / static_cast<double>(n_cat);
  const auto n_grp = std::max<std::size_t>(c.groups.size(), 1);
  const double bar = slot * 0.8 / static_cast<double>(n_grp);
  for (std::size_t k = 0; k < c.categories.size(); ++k) {
    const double x0 = kLeft + slot * static_cast<double>(k);
    for (std::size_t g = 0; g < c.groups.size(); ++g) {
      const double v = k < c.groups[g].y.size() ? c.groups[g].y[k] : 0.0;
      const double top = py(v);
      out << "<rect x=\"" << fmt(x0 + slot * 0.1 + bar * static_cast<double>(g)) << "\" y=\"" << fmt(top)
          << "\" width=\"" << fmt(bar) << "\" height=\"" << fmt(kTop + kPlotH - top) << "\" fill=\""
          << c.groups[g].color << "\"/>\n";
    }
    out << "<text x=\"" << fmt(x0 + slot / 2) << "\" y=\"" << fmt(kTop + kPlotH + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << escape(c.categories[k]) << "</text>\n";
  }
  legend(out, c.groups);
  annotations(out, c.annotations);
  out << "</svg>\n";
  return out.str();
}

std::string embedded_data(const std::string& svg) {
  const std::string open = "<metadata><![CDATA[";
  const auto a = svg.find(open);
  if (a == std::string::npos) return {};
  const auto b = svg.find("]]></metadata>", a);
  if (b == std::string::npos) return {};
  return svg.substr(a + open.size(), b - a - open.size());
}

}  // namespace countfit::svg
