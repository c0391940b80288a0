#pragma once

#include <string>
#include <vector>

namespace countfit::svg {

struct Series {
  std::string name;
  std::vector<double> x;  ///< unused by bar charts
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct ScatterChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool identity_line = false;
  std::vector<std::string> annotations;
  std::string data_csv;  ///< embedded verbatim as metadata
};

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<Series> groups;  ///< one bar per group and category
  std::vector<std::string> annotations;
  std::string data_csv;
};

/// SVG 1.1 documents. Output depends only on the input, byte for byte.
std::string render(const ScatterChart& chart);
std::string render(const BarChart& chart);

/// Text between the CDATA markers of the metadata element, or empty.
std::string embedded_data(const std::string& svg);

std::string escape(const std::string& text);

}  // namespace countfit::svg
