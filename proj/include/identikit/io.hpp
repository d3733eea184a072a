#pragma once

// File formats: the IKOP operator container, CSV tables and self-contained
// SVG line plots. Numbers are printed in their shortest round-trip form so
// that outputs are reproducible byte for byte.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "identikit/linop.hpp"

namespace identikit {

// Layout (all integers and floats little-endian):
//   bytes 0..3    magic "IKOP"
//   u32           format version (1)
//   u64           header length H in bytes
//   H bytes       UTF-8 JSON header: labels, node counts, dimensions, shapes
//   f64 arrays    domain nodes, domain weights, codomain nodes,
//                 codomain weights, matrix (row-major)
// Node arrays are row-major (node by coordinate).
void write_operator(const LinOp& op, const std::string& path);
void write_operator(const LinOp& op, std::ostream& out);
LinOp read_operator(const std::string& path);
LinOp read_operator(std::istream& in);

std::string format_number(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

void write_csv(const CsvTable& table, const std::string& path);
std::string to_csv(const CsvTable& table);
// Numeric CSV with an optional non-numeric header row. Blank lines and lines
// starting with '#' are skipped.
NodeMat read_numeric_csv(const std::string& path);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

// Non-finite points and nonpositive values on log axes are dropped from the
// drawing but kept in the embedded data block.
std::string render_svg(const Plot& plot);
void write_svg(const Plot& plot, const std::string& path);

void write_text(const std::string& text, const std::string& path);

}  // namespace identikit
