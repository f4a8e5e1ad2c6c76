#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stdde/flow_series.hpp"
#include "stdde/graph.hpp"

namespace stdde {

/// Daily interval [begin, end) in minutes after midnight.
struct PeakWindow {
  double begin_minute = 0.0;
  double end_minute = 0.0;
};

/// 07:00-09:00 and 17:00-19:00.
std::vector<PeakWindow> default_peak_windows();

/// Per-edge propagation delays in grid units, one value per regime.
/// Entries are indexed by graph edge index.
struct DelayTable {
  std::vector<double> tau_offpeak;
  std::vector<double> tau_peak;
  std::vector<bool> self_loop;
  std::vector<bool> degenerate;  // set by the MCC estimator
  std::vector<PeakWindow> peak_windows = default_peak_windows();
  double tau_max = 12.0;
  bool learnable = true;

  static DelayTable zeros(const TrafficGraph& graph, double tau_max);

  std::size_t size() const { return tau_offpeak.size(); }
  bool is_peak(double t_abs_minutes) const;
  double& entry(std::size_t edge, bool peak) { return peak ? tau_peak.at(edge) : tau_offpeak.at(edge); }
  double entry(std::size_t edge, bool peak) const { return peak ? tau_peak.at(edge) : tau_offpeak.at(edge); }
};

/// Delay of `edge` at absolute time `t_abs_minutes`: the peak entry when the
/// time of day falls in a peak window, else the off-peak entry.
double delay_lookup(const DelayTable& table, std::size_t edge, double t_abs_minutes);

/// Clamps every entry into [0, tau_max] and zeroes self-loops.
DelayTable project_delays(DelayTable table);
void project_delays_in_place(DelayTable& table);

struct MccEstimate {
  int shift = 0;
  bool degenerate = false;
};

/// Shift k in [0, max_shift] maximizing the Pearson correlation between
/// x_src delayed by k and x_dst over their overlap; ties go to the smaller k.
/// Requires equal lengths of at least max_shift + 8.
MccEstimate estimate_delay_mcc(std::span<const double> x_src, std::span<const double> x_dst, int max_shift);

/// Same search restricted to destination samples with mask[t] set. Falls back
/// to a degenerate result when any shift has fewer than `min_pairs` pairs.
MccEstimate estimate_delay_mcc_masked(std::span<const double> x_src, std::span<const double> x_dst,
                                      std::span<const char> mask, int max_shift, int min_pairs = 8);

/// Fractional-lag search: both series are resampled with a natural spline at
/// step 1/factor before the integer search; the result is in original units.
double estimate_delay_mcc_resampled(std::span<const double> x_src, std::span<const double> x_dst,
                                    int max_shift, int factor);

struct MccOptions {
  int resample_factor = 1;
  std::vector<PeakWindow> peak_windows = default_peak_windows();
};

/// Runs the estimator on every non-self-loop edge (src -> dst), separately for
/// samples whose destination time lies in peak and off-peak hours. A regime
/// with too few samples falls back to the estimate over all samples.
DelayTable estimate_all_delays(const FlowSeries& flows, const TrafficGraph& graph, int max_shift,
                               const MccOptions& options = {});

/// `src,dst,tau_offpeak,tau_peak` per non-self-loop edge, 6 decimal places.
void write_delays_csv(const std::string& path, const DelayTable& table, const TrafficGraph& graph);
DelayTable read_delays_csv(const std::string& path, const TrafficGraph& graph, double tau_max);

}  // namespace stdde
