#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cae/dubins.hpp"
#include "cae/grid_world.hpp"
#include "cae/learner.hpp"

namespace cae::svg {

/// Maps world coordinates (y up) onto a pixel canvas (y down).
struct Frame {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double width = 400.0, height = 400.0;
  double margin = 20.0;

  double px(double x) const { return margin + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return margin + (y1 - y) / (y1 - y0) * height; }
  double scale() const { return width / (x1 - x0); }
};

struct Polyline {
  std::vector<std::array<double, 2>> points;
  std::string color = "#d62728";
  double stroke = 2.0;
};

struct Marker {
  std::array<double, 2> at;
  std::string color;
  std::string label;
};

struct Arrow {
  std::array<double, 2> from;
  std::array<double, 2> delta;  // world units
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Linear grayscale: 0 -> white, 1 -> black.
inline std::string gray(double v) {
  const int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
  return buf;
}

class Canvas {
 public:
  explicit Canvas(Frame f, std::string title = {}) : f_(f), title_(std::move(title)) {}

  const Frame& frame() const { return f_; }

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
    body_ << "<rect x=\"" << num(f_.px(x)) << "\" y=\"" << num(f_.py(y + h)) << "\" width=\"" << num(w * f_.scale())
          << "\" height=\"" << num(h * f_.scale()) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void line(std::array<double, 2> a, std::array<double, 2> b, const std::string& color, double width) {
    body_ << "<line x1=\"" << num(f_.px(a[0])) << "\" y1=\"" << num(f_.py(a[1])) << "\" x2=\"" << num(f_.px(b[0]))
          << "\" y2=\"" << num(f_.py(b[1])) << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width)
          << "\"/>\n";
  }

  void polyline(const Polyline& p) {
    if (p.points.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << p.color << "\" stroke-width=\"" << num(p.stroke)
          << "\" stroke-linejoin=\"round\" points=\"";
    for (const auto& q : p.points) body_ << num(f_.px(q[0])) << ',' << num(f_.py(q[1])) << ' ';
    body_ << "\"/>\n";
  }

  void marker(const Marker& m, double radius = 6.0) {
    body_ << "<circle cx=\"" << num(f_.px(m.at[0])) << "\" cy=\"" << num(f_.py(m.at[1])) << "\" r=\"" << num(radius)
          << "\" fill=\"" << m.color << "\"/>\n";
    if (!m.label.empty())
      body_ << "<text x=\"" << num(f_.px(m.at[0]) + radius + 2) << "\" y=\"" << num(f_.py(m.at[1]) + 4)
            << "\" font-size=\"11\" font-family=\"sans-serif\">" << escape(m.label) << "</text>\n";
  }

  void arrow(const Arrow& a, const std::string& color = "#1f4e79") {
    const std::array<double, 2> tip{a.from[0] + a.delta[0], a.from[1] + a.delta[1]};
    line(a.from, tip, color, 1.8);
    const double dx = f_.px(tip[0]) - f_.px(a.from[0]), dy = f_.py(tip[1]) - f_.py(a.from[1]);
    const double len = std::hypot(dx, dy);
    if (len == 0.0) return;
    const double ux = dx / len, uy = dy / len, head = 6.0;
    const double bx = f_.px(tip[0]) - ux * head, by = f_.py(tip[1]) - uy * head;
    body_ << "<polygon fill=\"" << color << "\" points=\"" << num(f_.px(tip[0])) << ',' << num(f_.py(tip[1])) << ' '
          << num(bx - uy * head * 0.5) << ',' << num(by + ux * head * 0.5) << ' ' << num(bx + uy * head * 0.5) << ','
          << num(by - ux * head * 0.5) << "\"/>\n";
  }

  void text(double px, double py, const std::string& s, int size = 12, const std::string& anchor = "start") {
    body_ << "<text x=\"" << num(px) << "\" y=\"" << num(py) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  void raw(const std::string& s) { body_ << s; }

  std::string str() const {
    std::ostringstream out;
    const double w = f_.width + 2 * f_.margin, h = f_.height + 2 * f_.margin + (title_.empty() ? 0 : 16);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title_.empty())
      out << "<text x=\"" << num(f_.margin) << "\" y=\"" << num(h - 6)
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape(title_) << "</text>\n";
    out << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  Frame f_;
  std::string title_;
  std::ostringstream body_;
};

/// Heatmap of a matrix whose row r / column c cover world cell
/// [x0 + c*dx, x0 + (c+1)*dx] x [y0 + r*dy, ...]. NaN cells render blue-gray.
inline Canvas heatmap(const Eigen::MatrixXd& m, double x0, double y0, double cell_w, double cell_h,
                      const std::string& title, double px_per_cell = 28.0) {
  Frame f;
  f.x0 = x0;
  f.y0 = y0;
  f.x1 = x0 + cell_w * static_cast<double>(m.cols());
  f.y1 = y0 + cell_h * static_cast<double>(m.rows());
  f.width = px_per_cell * static_cast<double>(m.cols());
  f.height = f.width * (f.y1 - f.y0) / (f.x1 - f.x0);
  Canvas c(f, title);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index k = 0; k < m.cols(); ++k)
      c.rect(x0 + static_cast<double>(k) * cell_w, y0 + static_cast<double>(r) * cell_h, cell_w, cell_h,
             std::isnan(m(r, k)) ? "#8da3b5" : gray(m(r, k)));
  c.rect(f.x0, f.y0, f.x1 - f.x0, f.y1 - f.y0, "none", "#444444");
  return c;
}

/// Grid map: free cells white, holes dark, walls gray; cell (x, y) spans
/// [x - 0.5, x + 0.5] so that paths pass through cell centres.
inline Canvas grid_map(const GridWorld& env, const std::string& title, double px_per_cell = 40.0) {
  const auto& l = env.layout();
  Frame f;
  f.x0 = -0.5;
  f.y0 = -0.5;
  f.x1 = l.width - 0.5;
  f.y1 = l.height - 0.5;
  f.width = px_per_cell * l.width;
  f.height = px_per_cell * l.height;
  Canvas c(f, title);
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x) {
      const Cell cell{x, y};
      const std::string fill = !env.valid(cell) ? "#9a9a9a" : env.is_hole(cell) ? "#1b2a41" : "#ffffff";
      c.rect(x - 0.5, y - 0.5, 1.0, 1.0, fill, "#cccccc");
    }
  return c;
}

inline Canvas dubins_map(const DubinsCar& env, const std::string& title, double px = 420.0) {
  const auto& l = env.layout();
  Frame f;
  f.x1 = l.size;
  f.y1 = l.size;
  f.width = px;
  f.height = px;
  Canvas c(f, title);
  c.rect(0.0, 0.0, l.size, l.size, "#ffffff", "#444444");
  for (const auto& w : l.walls) c.line({w.a.x, w.a.y}, {w.b.x, w.b.y}, "#333333", 4.0);
  return c;
}

/// Success indicator smoothed over a trailing window, plus mean loss.
inline std::string learning_curve(const std::vector<EpisodeRecord>& records, int window = 50) {
  Frame f;
  f.width = 520.0;
  f.height = 180.0;
  f.margin = 40.0;
  const double n = std::max<double>(1.0, static_cast<double>(records.size()));
  f.x1 = n;
  Canvas top(f, "success rate (trailing mean) and mean loss per episode");
  top.rect(0.0, 0.0, n, 1.0, "none", "#444444");
  Polyline succ{{}, "#2ca02c", 1.8}, loss{{}, "#1f77b4", 1.2};
  double max_loss = 0.0;
  for (const auto& r : records) max_loss = std::max(max_loss, r.mean_loss);
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    acc += records[i].success ? 1.0 : 0.0;
    if (i >= static_cast<std::size_t>(window)) acc -= records[i - static_cast<std::size_t>(window)].success ? 1.0 : 0.0;
    const double denom = static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
    succ.points.push_back({static_cast<double>(i), acc / denom});
    loss.points.push_back({static_cast<double>(i), max_loss > 0.0 ? records[i].mean_loss / max_loss : 0.0});
  }
  top.polyline(loss);
  top.polyline(succ);
  top.text(f.margin, f.margin - 8, "green: success (window " + std::to_string(window) + "), blue: loss / " +
                                       num(max_loss), 11);
  top.text(f.px(0), f.py(0) + 14, "0", 10, "middle");
  top.text(f.px(n), f.py(0) + 14, std::to_string(records.size()), 10, "middle");
  top.text(f.px(0) - 4, f.py(1) + 4, "1", 10, "end");
  return top.str();
}

}  // namespace cae::svg
