#pragma once

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "slad/tensor.hpp"

namespace slad {

using CsvCell = std::variant<std::string, long, double>;

/// RFC 4180 CSV writer. Doubles use 17 significant digits so reruns of a
/// deterministic computation produce byte-identical files.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> header);

  void row(const std::vector<CsvCell>& cells);
  void flush() { out_.flush(); }

  static std::string escape(const std::string& field);
  static std::string format(const CsvCell& cell);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

/// Points as (x, y) from the first two columns, colored by label.
std::string svg_scatter(const Tensor& points, const std::vector<int>& labels, const std::string& title);

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_lines(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label);

/// Fails if `path` exists (run directories are append-only).
void write_new_file(const std::string& path, const std::string& contents);

}  // namespace slad
