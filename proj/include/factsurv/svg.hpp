#pragma once

// Minimal deterministic SVG writer: fixed-precision coordinates, no
// timestamps, elements emitted in call order, so identical inputs produce
// byte-identical documents.

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace factsurv::svg {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out.push_back(c);
    }
  }
  return out;
}

class Document {
public:
  Document(double width, double height, std::string_view source_hash)
      : width_(width), height_(height) {
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width_) +
             "\" height=\"" + fmt(height_) + "\" viewBox=\"0 0 " + fmt(width_) + " " +
             fmt(height_) + "\" data-source-hash=\"" + std::string(source_hash) + "\">\n";
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + fmt(width_) + "\" height=\"" + fmt(height_) +
             "\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width = 1.0, const std::string& dash = "") {
    body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
             "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
             fmt(stroke_width) + "\"";
    if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
    body_ += "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width = 1.5) {
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
             fmt(stroke_width) + "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ += ' ';
      body_ += fmt(pts[i].first) + "," + fmt(pts[i].second);
    }
    body_ += "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
               double opacity) {
    body_ += "<polygon fill=\"" + fill + "\" fill-opacity=\"" + fmt(opacity) +
             "\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ += ' ';
      body_ += fmt(pts[i].first) + "," + fmt(pts[i].second);
    }
    body_ += "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) +
             "\" fill=\"" + fill + "\"/>\n";
  }

  void text(double x, double y, std::string_view content, double size = 12.0,
            const std::string& anchor = "start", const std::string& fill = "#222222") {
    body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-family=\"sans-serif\" "
             "font-size=\"" + fmt(size) + "\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
             "\">" + escape(content) + "</text>\n";
  }

  std::string finish() const { return body_ + "</svg>\n"; }

  double width() const { return width_; }
  double height() const { return height_; }

private:
  double width_, height_;
  std::string body_;
};

// FNV-1a 64-bit, rendered as 16 hex digits; used to stamp figures with the
// hash of the data they were drawn from.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace factsurv::svg
