#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace archsim::cli {

/// A flat table; every cell is preformatted text.
struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const Table& t);
/// {"title", "columns", "rows": [{column: cell}]}; numeric cells stay numbers.
nlohmann::ordered_json to_json(const Table& t);
std::string to_svg(const Table& t);

/// Square heatmap with row/column labels; NaN cells are left blank.
std::string heatmap_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& values);

struct Bar {
  std::string label;
  double value = 0.0;
};
/// Horizontal bars; negative values extend left of the axis.
std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars);

struct Point {
  double x = 0.0, y = 0.0;
};
std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<Point>& points);

/// Several SVG fragments stacked vertically in one document.
std::string stack_svg(const std::vector<std::string>& documents);

std::string escape_xml(const std::string& s);

}  // namespace archsim::cli
