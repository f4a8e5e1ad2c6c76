#include "stdde/delay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "csv_util.hpp"
#include "stdde/error.hpp"
#include "stdde/spline.hpp"

namespace stdde {

std::vector<PeakWindow> default_peak_windows() { return {{7 * 60.0, 9 * 60.0}, {17 * 60.0, 19 * 60.0}}; }

DelayTable DelayTable::zeros(const TrafficGraph& graph, double tau_max) {
  DelayTable t;
  t.tau_offpeak.assign(graph.edge_count(), 0.0);
  t.tau_peak.assign(graph.edge_count(), 0.0);
  t.degenerate.assign(graph.edge_count(), false);
  t.self_loop.resize(graph.edge_count());
  for (std::size_t e = 0; e < graph.edge_count(); ++e) t.self_loop[e] = graph.is_self_loop(e);
  t.tau_max = tau_max;
  return t;
}

bool DelayTable::is_peak(double t_abs_minutes) const {
  double tod = std::fmod(t_abs_minutes, 1440.0);
  if (tod < 0.0) tod += 1440.0;
  for (const PeakWindow& w : peak_windows) {
    if (tod >= w.begin_minute && tod < w.end_minute) return true;
  }
  return false;
}

double delay_lookup(const DelayTable& table, std::size_t edge, double t_abs_minutes) {
  if (edge >= table.size()) throw InputError("unknown edge " + std::to_string(edge));
  if (table.self_loop[edge]) return 0.0;
  return table.is_peak(t_abs_minutes) ? table.tau_peak[edge] : table.tau_offpeak[edge];
}

void project_delays_in_place(DelayTable& table) {
  for (std::size_t e = 0; e < table.size(); ++e) {
    if (table.self_loop[e]) {
      table.tau_offpeak[e] = 0.0;
      table.tau_peak[e] = 0.0;
      continue;
    }
    table.tau_offpeak[e] = std::clamp(table.tau_offpeak[e], 0.0, table.tau_max);
    table.tau_peak[e] = std::clamp(table.tau_peak[e], 0.0, table.tau_max);
  }
}

DelayTable project_delays(DelayTable table) {
  project_delays_in_place(table);
  return table;
}

namespace {

// Pearson correlation of (x_src[t-k], x_dst[t]) over destination indices t in
// [k, L) selected by the mask. Returns nullopt-like NaN on zero variance.
double shifted_pearson(std::span<const double> x_src, std::span<const double> x_dst, std::span<const char> mask,
                       int k, int& pairs) {
  const auto len = static_cast<int>(x_dst.size());
  double sa = 0.0, sb = 0.0;
  pairs = 0;
  for (int t = k; t < len; ++t) {
    if (!mask.empty() && !mask[t]) continue;
    sa += x_src[t - k];
    sb += x_dst[t];
    ++pairs;
  }
  if (pairs == 0) return std::numeric_limits<double>::quiet_NaN();
  const double ma = sa / pairs, mb = sb / pairs;
  double saa = 0.0, sbb = 0.0, sab = 0.0, qa = 0.0, qb = 0.0;
  for (int t = k; t < len; ++t) {
    if (!mask.empty() && !mask[t]) continue;
    const double a = x_src[t - k] - ma, b = x_dst[t] - mb;
    saa += a * a;
    sbb += b * b;
    sab += a * b;
    qa += x_src[t - k] * x_src[t - k];
    qb += x_dst[t] * x_dst[t];
  }
  constexpr double kRel = 1e-20;
  if (saa <= kRel * qa || sbb <= kRel * qb || saa == 0.0 || sbb == 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

MccEstimate estimate_delay_mcc_masked(std::span<const double> x_src, std::span<const double> x_dst,
                                      std::span<const char> mask, int max_shift, int min_pairs) {
  if (x_src.size() != x_dst.size()) throw InputError("MCC series lengths differ");
  if (max_shift < 0) throw InputError("max_shift must be nonnegative");
  if (!mask.empty() && mask.size() != x_dst.size()) throw InputError("MCC mask length differs from series");

  MccEstimate best;
  double best_corr = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= max_shift; ++k) {
    int pairs = 0;
    const double r = shifted_pearson(x_src, x_dst, mask, k, pairs);
    if (pairs < min_pairs || std::isnan(r)) return MccEstimate{0, true};
    if (r > best_corr) {
      best_corr = r;
      best.shift = k;
    }
  }
  return best;
}

MccEstimate estimate_delay_mcc(std::span<const double> x_src, std::span<const double> x_dst, int max_shift) {
  if (x_src.size() != x_dst.size()) throw InputError("MCC series lengths differ");
  if (max_shift < 0) throw InputError("max_shift must be nonnegative");
  if (x_src.size() < static_cast<std::size_t>(max_shift) + 8) {
    throw InputError("MCC needs series of length >= max_shift + 8");
  }
  return estimate_delay_mcc_masked(x_src, x_dst, {}, max_shift, 1);
}

double estimate_delay_mcc_resampled(std::span<const double> x_src, std::span<const double> x_dst, int max_shift,
                                    int factor) {
  if (factor < 1) throw InputError("resample factor must be >= 1");
  if (factor == 1) return estimate_delay_mcc(x_src, x_dst, max_shift).shift;
  if (x_src.size() != x_dst.size()) throw InputError("MCC series lengths differ");
  const auto len = static_cast<Eigen::Index>(x_src.size());
  std::vector<double> knots(len);
  Eigen::MatrixXd vals(len, 2);
  for (Eigen::Index i = 0; i < len; ++i) {
    knots[i] = static_cast<double>(i);
    vals(i, 0) = x_src[i];
    vals(i, 1) = x_dst[i];
  }
  const SplinePath path = fit_natural_cubic(knots, vals, 1);
  const Eigen::Index fine = (len - 1) * factor + 1;
  std::vector<double> a(fine), b(fine);
  for (Eigen::Index i = 0; i < fine; ++i) {
    const double t = std::min(static_cast<double>(i) / factor, knots.back());
    a[i] = path.eval(0, t)(0);
    b[i] = path.eval(1, t)(0);
  }
  const MccEstimate est = estimate_delay_mcc(a, b, max_shift * factor);
  return est.degenerate ? 0.0 : static_cast<double>(est.shift) / factor;
}

DelayTable estimate_all_delays(const FlowSeries& flows, const TrafficGraph& graph, int max_shift,
                               const MccOptions& options) {
  if (flows.nodes() != graph.node_count()) throw InputError("flow columns do not match graph node count");
  if (flows.steps() < 2 * max_shift || flows.steps() < max_shift + 8) {
    throw InputError("flow series too short for max_shift " + std::to_string(max_shift));
  }
  DelayTable table = DelayTable::zeros(graph, std::max(1.0, static_cast<double>(max_shift)));
  table.peak_windows = options.peak_windows;

  const int steps = flows.steps();
  std::vector<char> peak_mask(steps), off_mask(steps);
  for (int t = 0; t < steps; ++t) {
    peak_mask[t] = table.is_peak(flows.minute_at(t)) ? 1 : 0;
    off_mask[t] = peak_mask[t] ? 0 : 1;
  }
  const int min_pairs = max_shift + 8;

  std::vector<double> xs(steps), xd(steps);
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    if (graph.is_self_loop(e)) continue;
    const Edge& edge = graph.edge(e);
    for (int t = 0; t < steps; ++t) {
      xs[t] = flows.values(t, edge.src);
      xd[t] = flows.values(t, edge.dst);
    }
    double pooled = 0.0;
    bool pooled_degenerate = false;
    if (options.resample_factor > 1) {
      pooled = estimate_delay_mcc_resampled(xs, xd, max_shift, options.resample_factor);
    } else {
      const MccEstimate all = estimate_delay_mcc(xs, xd, max_shift);
      pooled = all.shift;
      pooled_degenerate = all.degenerate;
    }

    auto regime = [&](const std::vector<char>& mask) -> std::pair<double, bool> {
      if (options.resample_factor > 1) return {pooled, pooled_degenerate};
      const MccEstimate r = estimate_delay_mcc_masked(xs, xd, mask, max_shift, min_pairs);
      if (r.degenerate) return {pooled, pooled_degenerate};
      return {static_cast<double>(r.shift), false};
    };
    const auto [off, off_deg] = regime(off_mask);
    const auto [peak, peak_deg] = regime(peak_mask);
    table.tau_offpeak[e] = off;
    table.tau_peak[e] = peak;
    table.degenerate[e] = pooled_degenerate || off_deg || peak_deg;
  }
  return table;
}

void write_delays_csv(const std::string& path, const DelayTable& table, const TrafficGraph& graph) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  char buf[128];
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    if (graph.is_self_loop(e)) continue;
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f\n", graph.edge(e).src, graph.edge(e).dst,
                  table.tau_offpeak.at(e), table.tau_peak.at(e));
    out << buf;
  }
}

DelayTable read_delays_csv(const std::string& path, const TrafficGraph& graph, double tau_max) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  DelayTable table = DelayTable::zeros(graph, tau_max);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 4) throw ParseError("expected src,dst,tau_offpeak,tau_peak", lineno);
    const auto src = detail::to_long(f[0]);
    const auto dst = detail::to_long(f[1]);
    const auto off = detail::to_double(f[2]);
    const auto peak = detail::to_double(f[3]);
    if (!src || !dst || !off || !peak) throw ParseError("non-numeric delay field", lineno);
    const long e = graph.find_edge(static_cast<int>(*src), static_cast<int>(*dst));
    if (e < 0) throw ParseError("delay for an edge that is not in the graph", lineno);
    table.tau_offpeak[e] = *off;
    table.tau_peak[e] = *peak;
  }
  project_delays_in_place(table);
  return table;
}

}  // namespace stdde
