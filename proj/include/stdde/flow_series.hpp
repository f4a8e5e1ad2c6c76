#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace stdde {

/// Traffic flow on a uniform time grid: values is (steps x nodes).
struct FlowSeries {
  Eigen::MatrixXd values;
  std::vector<std::string> node_ids;
  double start_minute = 0.0;      // absolute minute of row 0, epoch anchored
  double interval_minutes = 5.0;  // wall-clock spacing between rows
  double raw_interval = 1.0;      // spacing in the file's own time units
  bool has_clock = false;         // timestamps were calendar times

  int steps() const { return static_cast<int>(values.rows()); }
  int nodes() const { return static_cast<int>(values.cols()); }
  double minute_at(int row) const { return start_minute + row * interval_minutes; }

  /// Rows [begin, end) with the time anchor shifted accordingly.
  FlowSeries slice(int begin, int end) const;
};

}  // namespace stdde
