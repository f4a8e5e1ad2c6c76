#include "stdde/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>

#include "stdde/checkpoint.hpp"
#include "stdde/data.hpp"
#include "stdde/delay.hpp"
#include "stdde/error.hpp"
#include "stdde/graph.hpp"
#include "stdde/model.hpp"
#include "stdde/stability.hpp"

namespace stdde {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string metric_line(const Metrics& m) {
  return "MAE=" + fmt(m.mae) + " RMSE=" + fmt(m.rmse) + " MAPE=" + (m.mape_defined ? fmt(m.mape) : "undefined");
}

int node_count_of(const std::vector<Edge>& edges) {
  int n = 0;
  for (const Edge& e : edges) n = std::max({n, e.src + 1, e.dst + 1});
  return n;
}

PlantedEdge parse_planted(const std::string& text) {
  PlantedEdge p;
  std::istringstream ss(text);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() < 3 || parts.size() > 4) throw InputError("edge spec '" + text + "' is not src:dst:lag[:gain]");
  try {
    p.src = std::stoi(parts[0]);
    p.dst = std::stoi(parts[1]);
    p.lag = std::stoi(parts[2]);
    if (parts.size() == 4) p.gain = std::stod(parts[3]);
  } catch (const std::logic_error&) {
    throw InputError("edge spec '" + text + "' is not numeric");
  }
  return p;
}

void add_train_options(CLI::App* sub, CliConfig& c) {
  sub->add_option("--lr", c.train.learning_rate, "Adam learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", c.train.batch_size, "Windows per mini-batch")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--epochs", c.train.epochs, "Training epochs")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--delta", c.train.delta, "Huber threshold in standardized units")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--eta", c.train.eta, "Euler step in grid units")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.train.seed, "Random seed")->capture_default_str();
  sub->add_option("--hidden", c.train.hidden_dim, "Hidden state width")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--window-in", c.train.window_in, "Input frames per window")->capture_default_str()->check(CLI::Range(2, 100000));
  sub->add_option("--window-out", c.train.window_out, "Target frames per window")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--stride", c.train.stride, "Window stride")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--delay-lr-mult", c.train.delay_lr_multiplier, "Learning-rate multiplier for delays")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_flag("--enforce-stability", c.train.enforce_stability, "Clamp c into (0, 1/K] after every step");
  auto* fixed = sub->add_flag("--fixed-delays", "Keep delays at their initial values");
  auto* learn = sub->add_flag("--learnable-delays", "Train the delays (default)");
  fixed->excludes(learn);
  fixed->each([&c](const std::string&) { c.train.learnable_delays = false; });
  learn->each([&c](const std::string&) { c.train.learnable_delays = true; });
  sub->add_flag("--zero-delays", c.zero_delays, "Start from zero delays instead of the MCC estimate");
  sub->add_option("--delays", c.delays, "Initial delays CSV (src,dst,tau_offpeak,tau_peak)")->check(CLI::ExistingFile);
}

int run_train(const CliConfig& c, std::ostream& out) {
  const FlowSeries flows = load_flows_csv(c.flows, LoadOptions{c.minutes_per_step});
  const TrafficGraph graph = build_graph(flows.nodes(), load_adjacency_csv(c.adjacency));
  const DatasetSplit split = split_dataset(flows);
  TrainConfig cfg = c.train;
  cfg.threads = threads_from_env();
  if (c.zero_delays) cfg.delay_init = DelayInit::Zero;

  std::unique_ptr<ModelParams> initial;
  if (!c.delays.empty()) {
    const double tau_max = cfg.window_in * cfg.frame_spacing;
    const DelayTable table = read_delays_csv(c.delays, graph, tau_max);
    initial = std::make_unique<ModelParams>(init_params(1, cfg.hidden_dim, 1, graph, cfg.seed, tau_max, &table));
  }
  auto report = [&out](const EpochRecord& r, const ModelParams&) {
    out << "epoch " << r.epoch << " train_loss=" << fmt(r.train_loss) << " val_mae=" << fmt(r.val_mae) << "\n";
    return true;
  };
  const TrainResult result = train(split, graph, cfg, initial.get(), report);

  Checkpoint ck{result.best, graph, result.scaler, cfg, flows.interval_minutes};
  save_checkpoint(c.output, ck);
  if (!c.history.empty()) write_history_csv(c.history, result.history);
  out << "initial_loss=" << fmt(result.initial_loss) << " best_epoch=" << result.best_epoch << "\n";
  if (split.test.steps() >= cfg.window_in + cfg.window_out) {
    const auto test = windows(split.test, cfg.window_in, cfg.window_out, cfg.stride);
    const Evaluation ev = evaluate_windows(result.best, graph, test, result.scaler, cfg, flows.interval_minutes);
    out << "test " << metric_line(ev.metrics) << "\n";
  }
  out << "checkpoint written to " << c.output << "\n";
  return kExitOk;
}

int run_predict(const CliConfig& c, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  const FlowSeries flows = load_flows_csv(c.flows, LoadOptions{c.minutes_per_step});
  if (flows.nodes() != ck.graph.node_count()) throw InputError("flow columns do not match the checkpoint graph");
  const int frames = ck.config.window_in;
  if (flows.steps() < frames) throw InputError("need at least " + std::to_string(frames) + " rows of flow");

  std::vector<double> offsets = c.at_minutes;
  if (offsets.empty()) {
    if (c.horizon_count < 1 || !(c.horizon_interval > 0.0)) throw InputError("no horizon requested");
    for (int k = 1; k <= c.horizon_count; ++k) offsets.push_back(k * c.horizon_interval);
  }
  // Grid units are fixed by training; a file at another sampling rate simply
  // gets a different frame spacing.
  const double minutes_per_unit = ck.interval_minutes / ck.config.frame_spacing;
  const double spacing = flows.interval_minutes / minutes_per_unit;
  const double input_end = (frames - 1) * spacing;
  std::vector<double> requests;
  for (double m : offsets) {
    if (!(m > 0.0)) throw InputError("request offset " + fmt(m) + " min is not after the input end");
    requests.push_back(input_end + m / minutes_per_unit);
  }
  if (!std::is_sorted(requests.begin(), requests.end()) ||
      std::adjacent_find(requests.begin(), requests.end()) != requests.end()) {
    throw InputError("request offsets must be strictly increasing");
  }
  const int first = flows.steps() - frames;
  const Eigen::MatrixXd raw = flows.values.middleRows(first, frames);
  const ModelConfig mc{ck.config.eta, minutes_per_unit};
  const Forecast fc = forecast(ck.params, ck.graph, raw, ck.scaler, requests, mc, spacing, flows.minute_at(first));

  std::ofstream file;
  std::ostream* dst = &out;
  if (!c.output.empty()) {
    file.open(c.output);
    if (!file) throw InputError("cannot open " + c.output + " for writing");
    dst = &file;
  }
  *dst << "offset_minutes";
  for (const std::string& id : flows.node_ids) *dst << "," << id;
  *dst << "\n";
  char buf[40];
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.10g", offsets[k]);
    *dst << buf;
    for (Eigen::Index j = 0; j < fc.values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.10g", fc.values(static_cast<Eigen::Index>(k), j));
      *dst << "," << buf;
    }
    *dst << "\n";
  }
  return kExitOk;
}

int run_estimate(const CliConfig& c, std::ostream& out) {
  const FlowSeries flows = load_flows_csv(c.flows, LoadOptions{c.minutes_per_step});
  const TrafficGraph graph = build_graph(flows.nodes(), load_adjacency_csv(c.adjacency));
  MccOptions opts;
  opts.resample_factor = c.resample;
  const DelayTable table = estimate_all_delays(flows, graph, c.max_shift, opts);
  write_delays_csv(c.output, table, graph);
  out << "src,dst,tau_offpeak,tau_peak,degenerate\n";
  for (std::size_t e = 0; e < table.size(); ++e) {
    if (table.self_loop[e]) continue;
    const Edge& ed = graph.edge(e);
    out << ed.src << "," << ed.dst << "," << fmt(table.tau_offpeak[e]) << "," << fmt(table.tau_peak[e]) << ","
        << (table.degenerate[e] ? 1 : 0) << "\n";
  }
  return kExitOk;
}

int run_stability(const CliConfig& c, std::ostream& out) {
  const auto edges = load_adjacency_csv(c.adjacency);
  const int n = std::max(c.graph_nodes, node_count_of(edges));
  if (n == 0) throw InputError("adjacency has no edges");
  const TrafficGraph graph = build_graph(n, edges);
  DelayTable delays = DelayTable::zeros(graph, std::numeric_limits<double>::max());
  if (!c.delays.empty()) delays = read_delays_csv(c.delays, graph, std::numeric_limits<double>::max());
  const EnvelopeSystem env = build_envelope(graph, c.c, delays, c.peak ? Regime::Peak : Regime::OffPeak);
  out << format_report(check_stability(env, parse_norm(c.norm)), c.key_value);
  return kExitOk;
}

int run_generate(const CliConfig& c, std::ostream& out) {
  SyntheticSpec spec;
  spec.node_count = c.nodes;
  for (const std::string& p : c.planted) spec.edges.push_back(parse_planted(p));
  spec.length = c.length;
  spec.noise_std = c.noise * spec.amplitude;
  spec.interval_minutes = c.interval;
  if (!c.start_time.empty()) {
    bool ok = false;
    spec.start_minute = parse_iso_minutes(c.start_time, ok);
    if (!ok) throw InputError("cannot parse start time '" + c.start_time + "'");
  }
  const SyntheticDataset ds = generate_synthetic(spec, c.train.seed);
  save_flows_csv(c.output, ds.flows);
  std::vector<Edge> edges;
  for (const Edge& e : ds.graph.edges())
    if (e.src != e.dst) edges.push_back(e);
  if (!c.adj_out.empty()) save_adjacency_csv(c.adj_out, edges);
  if (!c.delays_out.empty()) write_delays_csv(c.delays_out, ds.true_delays, ds.graph);
  out << "wrote " << ds.flows.steps() << " rows x " << ds.flows.nodes() << " nodes to " << c.output << "\n";
  return kExitOk;
}

int run_evaluate(const CliConfig& c, std::ostream& out) {
  if (!c.pred.empty()) {
    const FlowSeries pred = load_flows_csv(c.pred, LoadOptions{c.minutes_per_step});
    const FlowSeries truth = load_flows_csv(c.truth, LoadOptions{c.minutes_per_step});
    out << metric_line(metrics(pred.values, truth.values)) << "\n";
    return kExitOk;
  }
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  const FlowSeries flows = load_flows_csv(c.flows, LoadOptions{c.minutes_per_step});
  if (flows.nodes() != ck.graph.node_count()) throw InputError("flow columns do not match the checkpoint graph");
  const DatasetSplit split = split_dataset(flows);
  const auto wins = windows(split.test, ck.config.window_in, ck.config.window_out, ck.config.stride);
  if (wins.empty()) throw InputError("test split yields no windows");
  const Evaluation ev = evaluate_windows(ck.params, ck.graph, wins, ck.scaler, ck.config, ck.interval_minutes);
  out << metric_line(ev.metrics) << "\n";
  return kExitOk;
}

}  // namespace

int parse(int argc, const char* const* argv, CliConfig& c, std::ostream& out, std::ostream& err) {
  CLI::App app{"Delay-aware continuous-time traffic forecasting", "stdde"};
  app.require_subcommand(1, 1);

  auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
  train->add_option("--flows", c.flows, "Flow CSV (time,<node>,...)")->required()->check(CLI::ExistingFile);
  train->add_option("--adj", c.adjacency, "Adjacency CSV (src,dst,weight)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", c.output, "Checkpoint path")->required();
  train->add_option("--history", c.history, "Loss history CSV path");
  train->add_option("--minutes-per-step", c.minutes_per_step, "Minutes per unit of an integer time column")->capture_default_str()->check(CLI::PositiveNumber);
  add_train_options(train, c);

  auto* predict = app.add_subcommand("predict", "Forecast at arbitrary offsets after the last observation");
  predict->add_option("--checkpoint", c.checkpoint, "Checkpoint from train")->required()->check(CLI::ExistingFile);
  predict->add_option("--flows", c.flows, "Flow CSV; its last window is the input")->required()->check(CLI::ExistingFile);
  auto* at = predict->add_option("--at", c.at_minutes, "Offsets in minutes after the input end, comma separated")->delimiter(',');
  auto* count = predict->add_option("--count", c.horizon_count, "Number of evenly spaced offsets")->check(CLI::PositiveNumber);
  predict->add_option("--interval", c.horizon_interval, "Spacing of --count offsets in minutes")->check(CLI::PositiveNumber);
  at->excludes(count);
  predict->add_option("--out", c.output, "Write the forecast CSV here instead of stdout");
  predict->add_option("--minutes-per-step", c.minutes_per_step, "Minutes per unit of an integer time column")->capture_default_str()->check(CLI::PositiveNumber);

  auto* est = app.add_subcommand("estimate-delays", "Per-edge peak/off-peak delays by maximum cross-correlation");
  est->add_option("--flows", c.flows, "Flow CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--adj", c.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--out", c.output, "Delays CSV path")->required();
  est->add_option("--max-shift", c.max_shift, "Largest lag searched, in steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  est->add_option("--resample", c.resample, "Spline resampling factor for fractional lags")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--minutes-per-step", c.minutes_per_step, "Minutes per unit of an integer time column")->capture_default_str()->check(CLI::PositiveNumber);

  auto* stab = app.add_subcommand("stability-check", "Sufficient stability test of the linear delay envelope");
  stab->add_option("--adj", c.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  stab->add_option("--c", c.c, "Spatial ratio c")->required()->check(CLI::PositiveNumber);
  stab->add_option("--p", c.norm, "Norm: 1, 2 or inf")->capture_default_str()->check(CLI::IsMember({"1", "2", "inf"}));
  stab->add_option("--delays", c.delays, "Delays CSV")->check(CLI::ExistingFile);
  stab->add_option("--nodes", c.graph_nodes, "Node count (default: largest id + 1)")->check(CLI::PositiveNumber);
  stab->add_flag("--peak", c.peak, "Use peak-hour delays");
  stab->add_flag("--kv", c.key_value, "Also print key=value lines");

  auto* gen = app.add_subcommand("generate-synthetic", "Write flows with planted propagation lags");
  gen->add_option("--nodes", c.nodes, "Node count")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--edge", c.planted, "Planted edge src:dst:lag[:gain], repeatable");
  gen->add_option("--length", c.length, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--noise", c.noise, "Noise std as a fraction of the amplitude")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--interval", c.interval, "Minutes between rows")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--start", c.start_time, "Timestamp of row 0 (YYYY-MM-DDTHH:MM)");
  gen->add_option("--seed", c.train.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", c.output, "Flow CSV path")->required();
  gen->add_option("--adj-out", c.adj_out, "Adjacency CSV path");
  gen->add_option("--delays-out", c.delays_out, "True delays CSV path");

  auto* eval = app.add_subcommand("evaluate", "MAE, RMSE and MAPE of predictions or of a checkpoint on the test split");
  auto* pred = eval->add_option("--pred", c.pred, "Prediction CSV (flow format)")->check(CLI::ExistingFile);
  auto* truth = eval->add_option("--truth", c.truth, "Ground-truth CSV (flow format)")->check(CLI::ExistingFile);
  auto* ckpt = eval->add_option("--checkpoint", c.checkpoint, "Checkpoint from train")->check(CLI::ExistingFile);
  auto* eflows = eval->add_option("--flows", c.flows, "Flow CSV whose test split is evaluated")->check(CLI::ExistingFile);
  eval->add_option("--minutes-per-step", c.minutes_per_step, "Minutes per unit of an integer time column")->capture_default_str()->check(CLI::PositiveNumber);
  pred->needs(truth);
  truth->needs(pred);
  ckpt->needs(eflows);
  eflows->needs(ckpt);
  pred->excludes(ckpt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.subcommand == "predict" && c.at_minutes.empty() && (c.horizon_count == 0 || c.horizon_interval <= 0.0)) {
    err << "predict: one of --at or --count with --interval is required\n";
    return kExitUsage;
  }
  if (c.subcommand == "evaluate" && c.pred.empty() && c.checkpoint.empty()) {
    err << "evaluate: one of --pred/--truth or --checkpoint/--flows is required\n";
    return kExitUsage;
  }
  return -1;
}

int run(const CliConfig& c, std::ostream& out, std::ostream& err) {
  try {
    if (c.subcommand == "train") return run_train(c, out);
    if (c.subcommand == "predict") return run_predict(c, out);
    if (c.subcommand == "estimate-delays") return run_estimate(c, out);
    if (c.subcommand == "stability-check") return run_stability(c, out);
    if (c.subcommand == "generate-synthetic") return run_generate(c, out);
    if (c.subcommand == "evaluate") return run_evaluate(c, out);
    err << "unknown subcommand '" << c.subcommand << "'\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: numerical divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliConfig config;
  const int code = parse(argc, argv, config, out, err);
  if (code >= 0) return code;
  return run(config, out, err);
}

}  // namespace stdde
