#include "stdde/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include "csv_util.hpp"
#include "stdde/error.hpp"

namespace stdde {

double parse_iso_minutes(const std::string& text, bool& ok) {
  ok = false;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  char sep = 0;
  int consumed = 0;
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (n < 6 || (sep != 'T' && sep != ' ')) return 0.0;
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == ':') {
    int used = 0;
    if (std::sscanf(rest.c_str() + 1, "%lf%n", &s, &used) != 1) return 0.0;
    rest = rest.substr(static_cast<std::size_t>(used) + 1);
  }
  if (!rest.empty() && rest != "Z") return 0.0;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s >= 60.0) return 0.0;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  ok = true;
  return static_cast<double>(days) * 1440.0 + h * 60.0 + mi + s / 60.0;
}

std::string format_iso_minutes(double minutes) {
  using namespace std::chrono;
  const double total_seconds = std::round(minutes * 60.0);
  const auto day_count = static_cast<long>(std::floor(total_seconds / 86400.0));
  long secs = static_cast<long>(total_seconds - static_cast<double>(day_count) * 86400.0);
  const year_month_day ymd{sys_days{days{day_count}}};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), secs / 3600, (secs / 60) % 60,
                secs % 60);
  return buf;
}

FlowSeries load_flows_csv(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open flow file " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++lineno;
  const auto header = detail::split_csv(line);
  if (header.size() < 2) throw ParseError("header needs a time column and at least one node", lineno);

  FlowSeries fs;
  for (std::size_t c = 1; c < header.size(); ++c) fs.node_ids.emplace_back(header[c]);
  const std::size_t nodes = fs.node_ids.size();

  std::vector<double> times;
  std::vector<double> flat;
  int clock_mode = -1;  // 0 = integer steps, 1 = ISO
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != nodes + 1) {
      throw ParseError("expected " + std::to_string(nodes + 1) + " fields, found " + std::to_string(fields.size()),
                       lineno);
    }
    double t = 0.0;
    if (const auto step = detail::to_long(fields[0]); step && clock_mode != 1) {
      clock_mode = 0;
      t = static_cast<double>(*step);
    } else {
      bool ok = false;
      t = parse_iso_minutes(std::string(fields[0]), ok);
      if (!ok || clock_mode == 0) throw ParseError("unrecognized time value '" + std::string(fields[0]) + "'", lineno);
      clock_mode = 1;
    }
    if (times.size() >= 2) {
      const double expected = times[1] - times[0];
      const double gap = t - times.back();
      if (std::abs(gap - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
        throw ParseError("non-uniform time spacing", lineno);
      }
    } else if (times.size() == 1 && !(t > times[0])) {
      throw ParseError("time must increase", lineno);
    }
    times.push_back(t);
    for (std::size_t c = 1; c <= nodes; ++c) {
      const auto v = detail::to_double(fields[c]);
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric flow value '" + std::string(fields[c]) + "'", lineno);
      flat.push_back(*v);
    }
  }
  if (times.empty()) throw ParseError("no data rows", lineno);

  fs.values.resize(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(nodes));
  for (std::size_t r = 0; r < times.size(); ++r)
    for (std::size_t c = 0; c < nodes; ++c) fs.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * nodes + c];

  fs.has_clock = clock_mode == 1;
  fs.raw_interval = times.size() >= 2 ? times[1] - times[0] : 1.0;
  if (fs.has_clock) {
    fs.start_minute = times[0];
    fs.interval_minutes = fs.raw_interval;
  } else {
    fs.start_minute = times[0] * options.minutes_per_step;
    fs.interval_minutes = fs.raw_interval * options.minutes_per_step;
  }
  return fs;
}

void save_flows_csv(const std::string& path, const FlowSeries& flows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "time";
  for (int c = 0; c < flows.nodes(); ++c) {
    out << ',' << (c < static_cast<int>(flows.node_ids.size()) ? flows.node_ids[c] : std::to_string(c));
  }
  out << '\n';
  const double minutes_per_unit = flows.raw_interval != 0.0 ? flows.interval_minutes / flows.raw_interval : 1.0;
  char buf[64];
  for (int r = 0; r < flows.steps(); ++r) {
    if (flows.has_clock) {
      out << format_iso_minutes(flows.minute_at(r));
    } else {
      out << std::llround(flows.start_minute / minutes_per_unit + r * flows.raw_interval);
    }
    for (int c = 0; c < flows.nodes(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", flows.values(r, c));
      out << buf;
    }
    out << '\n';
  }
}

std::vector<Edge> load_adjacency_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open adjacency file " + path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw ParseError("expected src,dst,weight", lineno);
    const auto src = detail::to_long(f[0]);
    const auto dst = detail::to_long(f[1]);
    const auto w = detail::to_double(f[2]);
    if (!src || !dst || !w) throw ParseError("non-numeric adjacency field", lineno);
    edges.push_back(Edge{static_cast<int>(*src), static_cast<int>(*dst), *w});
  }
  return edges;
}

void save_adjacency_csv(const std::string& path, const std::vector<Edge>& edges) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  char buf[96];
  for (const Edge& e : edges) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", e.src, e.dst, e.weight);
    out << buf;
  }
}

DatasetSplit split_dataset(const FlowSeries& series) {
  const int t = series.steps();
  if (t < 10) throw InputError("need at least 10 steps to split 6:2:2, got " + std::to_string(t));
  const int n_train = static_cast<int>(std::floor(0.6 * t));
  const int n_val = static_cast<int>(std::floor(0.2 * t));
  return DatasetSplit{series.slice(0, n_train), series.slice(n_train, n_train + n_val),
                      series.slice(n_train + n_val, t)};
}

int window_count(int length, int t_in, int t_out, int stride) {
  if (stride < 1 || length < t_in + t_out) return 0;
  return (length - (t_in + t_out)) / stride + 1;
}

std::vector<WindowPair> windows(const FlowSeries& series, int t_in, int t_out, int stride) {
  if (t_in < 2 || t_out < 1 || stride < 1) throw InputError("window sizes must be t_in >= 2, t_out >= 1, stride >= 1");
  std::vector<WindowPair> out;
  const int count = window_count(series.steps(), t_in, t_out, stride);
  if (count == 0) {
    std::cerr << "warning: series of length " << series.steps() << " is too short for windows of " << t_in << "+"
              << t_out << "\n";
    return out;
  }
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const int s = k * stride;
    WindowPair w;
    w.start = s;
    w.start_minute = series.minute_at(s);
    w.input = series.values.middleRows(s, t_in);
    w.target = series.values.middleRows(s + t_in, t_out);
    out.push_back(std::move(w));
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const int n = spec.node_count;
  if (n < 1) throw InputError("synthetic spec needs at least one node");
  int max_lag = 0;
  long lag_sum = 0;
  std::vector<std::vector<const PlantedEdge*>> parents(n);
  for (const PlantedEdge& e : spec.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n || e.src == e.dst) {
      throw InputError("planted edge endpoints are invalid");
    }
    if (e.lag < 0) throw InputError("planted lags must be nonnegative");
    parents[e.dst].push_back(&e);
    max_lag = std::max(max_lag, e.lag);
    lag_sum += e.lag;
  }
  if (spec.length <= 2 * max_lag) throw InputError("synthetic length must exceed twice the largest lag");

  // Evaluation order within one time step must respect zero-lag edges.
  std::vector<int> indeg(n, 0), order;
  for (const PlantedEdge& e : spec.edges)
    if (e.lag == 0) ++indeg[e.dst];
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) order.push_back(i);
  for (std::size_t q = 0; q < order.size(); ++q) {
    for (const PlantedEdge& e : spec.edges) {
      if (e.lag == 0 && e.src == order[q] && --indeg[e.dst] == 0) order.push_back(e.dst);
    }
  }
  if (static_cast<int>(order.size()) != n) throw InputError("zero-lag cycle in the synthetic spec");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> short_period(16.0, 64.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double daily = 1440.0 / spec.interval_minutes;
  struct Component {
    double period, phase, weight;
  };
  std::vector<std::vector<Component>> roots(n);
  for (int i = 0; i < n; ++i) {
    if (!parents[i].empty()) continue;
    if (spec.periods.empty()) {
      roots[i].push_back({daily, phase(rng), 1.0});
      for (int m = 0; m < 2; ++m) {
        const double p = short_period(rng);
        roots[i].push_back({p, phase(rng), 0.5});
      }
    } else {
      for (std::size_t m = 0; m < spec.periods.size(); ++m) {
        roots[i].push_back({spec.periods[m], phase(rng), m == 0 ? 1.0 : 0.5});
      }
    }
  }

  const long burn = 4 * lag_sum + 1;
  const long total = burn + spec.length;
  Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(total, n);
  for (long r = 0; r < total; ++r) {
    const double t = static_cast<double>(r - burn);
    for (int i : order) {
      double v = 0.0;
      if (parents[i].empty()) {
        v = spec.offset;
        for (const Component& c : roots[i]) v += spec.amplitude * c.weight * std::sin(2.0 * std::numbers::pi * t / c.period + c.phase);
      } else {
        for (const PlantedEdge* e : parents[i]) {
          const long src_row = r - e->lag;
          if (src_row >= 0) v += e->gain * sim(src_row, e->src);
        }
      }
      if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
      sim(r, i) = v;
    }
  }

  SyntheticDataset ds;
  ds.flows.values = sim.bottomRows(spec.length);
  for (int i = 0; i < n; ++i) ds.flows.node_ids.push_back(std::to_string(i));
  ds.flows.start_minute = spec.start_minute;
  ds.flows.interval_minutes = spec.interval_minutes;
  ds.flows.raw_interval = spec.interval_minutes;
  ds.flows.has_clock = true;

  std::vector<Edge> edges;
  for (const PlantedEdge& e : spec.edges) edges.push_back(Edge{e.src, e.dst, 1.0});
  ds.graph = build_graph(n, edges);
  ds.true_delays = DelayTable::zeros(ds.graph, std::max(12.0, static_cast<double>(max_lag)));
  for (const PlantedEdge& e : spec.edges) {
    const long idx = ds.graph.find_edge(e.src, e.dst);
    ds.true_delays.tau_offpeak[idx] = e.lag;
    ds.true_delays.tau_peak[idx] = e.lag;
  }
  return ds;
}

}  // namespace stdde
