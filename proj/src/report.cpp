#include "slad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace slad {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 480, H = 480, pad = 40;

  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); }
  double py(double y) const { return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad); }
};

Frame fit(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) { x0 -= 1; x1 += 1; }
  if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
  const double mx = 0.05 * (x1 - x0), my = 0.05 * (y1 - y0);
  return {x0 - mx, x1 + mx, y0 - my, y1 + my};
}

std::string open_svg(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::W << "\" height=\"" << Frame::H
     << "\" viewBox=\"0 0 " << Frame::W << ' ' << Frame::H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << Frame::W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  return os.str();
}

std::string axes(const Frame& f) {
  std::ostringstream os;
  os << "<rect x=\"" << Frame::pad << "\" y=\"" << Frame::pad << "\" width=\"" << Frame::W - 2 * Frame::pad
     << "\" height=\"" << Frame::H - 2 * Frame::pad << "\" fill=\"none\" stroke=\"#444\"/>\n";
  auto label = [&](double x, double y, double v, const char* anchor) {
    os << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(v) << "</text>\n";
  };
  label(Frame::pad, Frame::H - Frame::pad + 14, f.x0, "start");
  label(Frame::W - Frame::pad, Frame::H - Frame::pad + 14, f.x1, "end");
  label(Frame::pad - 4, Frame::H - Frame::pad, f.y0, "end");
  label(Frame::pad - 4, Frame::pad + 10, f.y1, "end");
  return os.str();
}

}  // namespace

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> header) : columns_(header.size()) {
  if (std::filesystem::exists(path)) throw std::runtime_error("refusing to overwrite existing file " + path);
  out_.open(path, std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << escape(header[i]);
  out_ << "\r\n";
}

std::string CsvWriter::escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string CsvWriter::format(const CsvCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return escape(*s);
  if (const auto* l = std::get_if<long>(&cell)) return std::to_string(*l);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", std::get<double>(cell));
  return buf;
}

void CsvWriter::row(const std::vector<CsvCell>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("CSV row has the wrong number of fields");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << format(cells[i]);
  out_ << "\r\n";
  if (!out_) throw std::runtime_error("failed writing CSV row");
}

std::string svg_scatter(const Tensor& points, const std::vector<int>& labels, const std::string& title) {
  if (points.cols() < 2) throw ShapeError("svg_scatter needs at least two columns");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto r = points.row(i);
    x0 = std::min(x0, r[0]);
    x1 = std::max(x1, r[0]);
    y0 = std::min(y0, r[1]);
    y1 = std::max(y1, r[1]);
  }
  const Frame f = points.rows() ? fit(x0, x1, y0, y1) : fit(-1, 1, -1, 1);
  std::ostringstream os;
  os << open_svg(title) << axes(f);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto r = points.row(i);
    const int label = i < labels.size() ? labels[i] : 0;
    const char* color = kPalette[static_cast<std::size_t>(std::max(label, 0)) % std::size(kPalette)];
    os << "<circle cx=\"" << num(f.px(r[0])) << "\" cy=\"" << num(f.py(r[1])) << "\" r=\"1.6\" fill=\"" << color
       << "\" fill-opacity=\"0.6\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_lines(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_lines: series '" + s.name + "' length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  const Frame f = std::isfinite(x0) ? fit(x0, x1, y0, y1) : fit(0, 1, 0, 1);
  std::ostringstream os;
  os << open_svg(title) << axes(f);
  os << "<text x=\"" << Frame::W / 2 << "\" y=\"" << Frame::H - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(x_label) << "</text>\n";
  os << "<text x=\"12\" y=\"" << Frame::H / 2 << "\" transform=\"rotate(-90 12 " << Frame::H / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(y_label)
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
    os << "\"/>\n";
    os << "<text x=\"" << Frame::pad + 8 << "\" y=\"" << Frame::pad + 14 + 13 * k << "\" fill=\"" << color
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_new_file(const std::string& path, const std::string& contents) {
  if (std::filesystem::exists(path)) throw std::runtime_error("refusing to overwrite existing file " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace slad
