#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace csem {

/// Rectangular numeric dataset, rows = observations.
struct Dataset {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  int column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

}  // namespace csem
