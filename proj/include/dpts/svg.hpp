#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dpts {

// Minimal standalone SVG emitter; enough for line plots and scatters without
// a plotting dependency, and inspectable as XML in tests.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void polyline(const std::vector<std::pair<double, double>>& points, const std::string& color,
                double stroke_width = 1.0, double opacity = 1.0);
  void circle(double cx, double cy, double r, const std::string& color, double opacity = 1.0);
  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double stroke_width = 1.0);
  void text(double x, double y, const std::string& content, double font_size = 10.0);
  void rect(double x, double y, double w, double h, const std::string& fill);

  std::string str() const;
  void save(const std::string& path) const;

  double width() const { return width_; }
  double height() const { return height_; }

 private:
  double width_, height_;
  std::vector<std::string> elements_;
};

std::string xml_escape(const std::string& s);

// Categorical palette; wraps around after 10 entries.
std::string palette_color(int index);

}  // namespace dpts
