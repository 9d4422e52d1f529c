#pragma once

#include "langevin/types.hpp"

#include <string>
#include <vector>

namespace langevin {

// Feature matrix plus binary labels for logistic regression.
struct Dataset {
  Mat features;        // n x d
  Eigen::VectorXi labels;  // n entries in {0, 1}
  std::vector<std::string> feature_names;
  bool standardized = false;
  bool intercept_appended = false;

  long rows() const { return static_cast<long>(features.rows()); }
  long cols() const { return static_cast<long>(features.cols()); }
  double positive_fraction() const;

  // Throws UsageError unless labels are binary, features finite and n > 0.
  void validate() const;
};

}  // namespace langevin
