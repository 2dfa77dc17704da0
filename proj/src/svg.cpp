#include "dpts/svg.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dpts/errors.hpp"

namespace dpts {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string palette_color(int index) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return kColors[((index % 10) + 10) % 10];
}

SvgCanvas::SvgCanvas(double width, double height) : width_(width), height_(height) {}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& points,
                         const std::string& color, double stroke_width, double opacity) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << fmt(stroke_width)
     << "\" stroke-opacity=\"" << fmt(opacity) << "\" points=\"";
  for (size_t i = 0; i < points.size(); ++i) {
    if (i) os << " ";
    os << fmt(points[i].first) << "," << fmt(points[i].second);
  }
  os << "\"/>";
  elements_.push_back(os.str());
}

void SvgCanvas::circle(double cx, double cy, double r, const std::string& color, double opacity) {
  std::ostringstream os;
  os << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r) << "\" fill=\""
     << color << "\" fill-opacity=\"" << fmt(opacity) << "\"/>";
  elements_.push_back(os.str());
}

void SvgCanvas::line(double x1, double y1, double x2, double y2, const std::string& color,
                     double stroke_width) {
  std::ostringstream os;
  os << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\""
     << fmt(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << fmt(stroke_width) << "\"/>";
  elements_.push_back(os.str());
}

void SvgCanvas::text(double x, double y, const std::string& content, double font_size) {
  std::ostringstream os;
  os << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << fmt(font_size)
     << "\" font-family=\"sans-serif\">" << xml_escape(content) << "</text>";
  elements_.push_back(os.str());
}

void SvgCanvas::rect(double x, double y, double w, double h, const std::string& fill) {
  std::ostringstream os;
  os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\""
     << fmt(h) << "\" fill=\"" << fill << "\"/>";
  elements_.push_back(os.str());
}

std::string SvgCanvas::str() const {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_) << "\" height=\""
     << fmt(height_) << "\" viewBox=\"0 0 " << fmt(width_) << " " << fmt(height_) << "\">\n";
  for (const auto& e : elements_) os << "  " << e << "\n";
  os << "</svg>\n";
  return os.str();
}

void SvgCanvas::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("svg: cannot write '" + path + "'");
  f << str();
}

}  // namespace dpts
