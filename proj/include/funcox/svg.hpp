#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "funcox/errors.hpp"

namespace funcox::svg {

struct Series {
  std::string name;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  std::string color = "#000000";
  double width = 1.5;
  std::string dash;  // stroke-dasharray, empty for solid
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  bool log_y = false;
  double width = 720;
  double height = 420;
};

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Static line plot: axes, ticks, legend, and one <path> per series.
inline std::string render(const Plot& p) {
  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = p.width - left - right, ph = p.height - top - bottom;
  auto ty = [&](double y) { return p.log_y ? std::log10(std::max(y, 1e-300)) : y; };

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : p.series)
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - ty(y)) / (ymax - ymin) * ph; };
  auto sy_raw = [&](double v) { return top + (ymax - v) / (ymax - ymin) * ph; };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(p.width) + "\" height=\"" + num(p.height) +
       "\" viewBox=\"0 0 " + num(p.width) + " " + num(p.height) + "\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + num(p.width) + "\" height=\"" + num(p.height) + "\" fill=\"#ffffff\"/>\n";
  o += "<text x=\"" + num(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" + escape(p.title) +
       "</text>\n";
  o += "<g stroke=\"#444444\" stroke-width=\"1\">\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
       num(top + ph) + "\"/>\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
       "\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    o += "<line x1=\"" + num(sx(xv)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(sx(xv)) + "\" y2=\"" +
         num(top + ph + 5) + "\"/>\n";
    o += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(sy_raw(yv)) + "\" x2=\"" + num(left) + "\" y2=\"" +
         num(sy_raw(yv)) + "\"/>\n";
  }
  o += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222222\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    o += "<text x=\"" + num(sx(xv)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" + tick(xv) +
         "</text>\n";
    o += "<text x=\"" + num(left - 8) + "\" y=\"" + num(sy_raw(yv) + 4) + "\" text-anchor=\"end\">" +
         tick(p.log_y ? std::pow(10.0, yv) : yv) + "</text>\n";
  }
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(p.height - 10) + "\" text-anchor=\"middle\">" +
       escape(p.xlabel) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(top + ph / 2) + ")\">" + escape(p.ylabel) + "</text>\n";
  for (std::size_t s = 0; s < p.series.size(); ++s) {
    const double ly = top + 14 + 18.0 * static_cast<double>(s);
    o += "<text x=\"" + num(left + pw + 40) + "\" y=\"" + num(ly + 4) + "\">" + escape(p.series[s].name) + "</text>\n";
  }
  o += "</g>\n";

  for (std::size_t s = 0; s < p.series.size(); ++s) {
    const Series& ser = p.series[s];
    std::string d;
    bool pen_down = false;
    for (Eigen::Index i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) {
        pen_down = false;
        continue;
      }
      d += (pen_down ? " L" : (d.empty() ? "M" : " M")) + num(sx(ser.x[i])) + "," + num(sy(ser.y[i]));
      pen_down = true;
    }
    if (d.empty()) d = "M" + num(left) + "," + num(top + ph);
    o += "<path id=\"series-" + std::to_string(s) + "\" fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"" +
         num(ser.width) + "\"" + (ser.dash.empty() ? "" : " stroke-dasharray=\"" + ser.dash + "\"") + " d=\"" + d +
         "\"><title>" + escape(ser.name) + "</title></path>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(s);
    o += "<line x1=\"" + num(left + pw + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 34) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + ser.color + "\" stroke-width=\"" + num(ser.width) + "\"" +
         (ser.dash.empty() ? "" : " stroke-dasharray=\"" + ser.dash + "\"") + "/>\n";
  }
  o += "</svg>\n";
  return o;
}

inline void write(const std::string& path, const Plot& p) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_failure, "cannot write '" + path + "'");
  out << render(p);
}

}  // namespace funcox::svg
