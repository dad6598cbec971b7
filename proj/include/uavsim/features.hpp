#pragma once

#include <Eigen/Dense>
#include <vector>

namespace uavsim {

inline constexpr int kFeatureDim = 3;  // [queue, battery, gain_db]

/// One row per sensor, columns [q, b, gain_db]. When `normalized` is set the
/// columns were min-max scaled and col_min / col_max record the original range.
struct FeatureMatrix {
  std::vector<int> ids;
  Eigen::MatrixXd values;
  bool normalized = false;
  Eigen::RowVectorXd col_min;
  Eigen::RowVectorXd col_max;

  Eigen::Index rows() const { return values.rows(); }
};

}  // namespace uavsim
