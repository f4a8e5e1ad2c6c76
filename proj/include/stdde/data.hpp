#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stdde/delay.hpp"
#include "stdde/flow_series.hpp"
#include "stdde/graph.hpp"

namespace stdde {

struct LoadOptions {
  double minutes_per_step = 5.0;  // wall-clock length of one unit of an integer time column
};

/// Header `time,<node>,<node>,...`; time is an integer step or ISO-8601
/// (`YYYY-MM-DDTHH:MM[:SS]`, `T` or space). Throws ParseError with the line
/// number on ragged rows, non-uniform spacing or non-numeric flow.
FlowSeries load_flows_csv(const std::string& path, const LoadOptions& options = {});
void save_flows_csv(const std::string& path, const FlowSeries& flows);

/// `src,dst,weight` per line, no header.
std::vector<Edge> load_adjacency_csv(const std::string& path);
void save_adjacency_csv(const std::string& path, const std::vector<Edge>& edges);

struct DatasetSplit {
  FlowSeries train;
  FlowSeries val;
  FlowSeries test;
};

/// Chronological 6:2:2 split by floor(0.6T) / floor(0.2T) / remainder.
DatasetSplit split_dataset(const FlowSeries& series);

struct WindowPair {
  int start = 0;              // row of the first input frame
  double start_minute = 0.0;  // absolute minute of the first input frame
  Eigen::MatrixXd input;      // t_in x nodes, raw flow
  Eigen::MatrixXd target;     // t_out x nodes, raw flow
};

/// Sliding windows; length - (t_in + t_out) + 1 of them at stride 1. A series
/// that is too short yields no windows and a warning on stderr.
std::vector<WindowPair> windows(const FlowSeries& series, int t_in = 12, int t_out = 12, int stride = 1);

/// Expected window count for the sliding rule above.
int window_count(int length, int t_in, int t_out, int stride);

struct PlantedEdge {
  int src = 0;
  int dst = 0;
  int lag = 0;  // grid steps
  double gain = 1.0;
};

struct SyntheticSpec {
  int node_count = 2;
  std::vector<PlantedEdge> edges;
  // Periods (steps) of the root sine mixture; empty means a daily period plus
  // two seeded periods in [16, 64] steps.
  std::vector<double> periods;
  double amplitude = 50.0;
  double offset = 200.0;
  double noise_std = 0.0;
  int length = 2000;
  double interval_minutes = 5.0;
  double start_minute = 0.0;  // absolute minute of row 0
};

struct SyntheticDataset {
  FlowSeries flows;
  TrafficGraph graph;
  DelayTable true_delays;
};

/// Roots get seeded sine mixtures; every other node is sum(gain * parent(t - lag))
/// plus Gaussian noise. Zero-lag cycles are rejected with InputError.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// ISO-8601 helpers on epoch-anchored minutes.
double parse_iso_minutes(const std::string& text, bool& ok);
std::string format_iso_minutes(double minutes);

}  // namespace stdde
