#include "stdde/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "stdde/error.hpp"

namespace stdde {

void adam_step(OptimizerState& state, ModelParams& params, ModelParams& grads, double lr, const AdamOptions& options) {
  std::vector<ParamBlock> pb = params.blocks();
  std::vector<ParamBlock> gb = grads.blocks();
  if (pb.size() != gb.size()) throw InputError("gradient blocks do not match parameters");
  std::size_t total = 0;
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (pb[b].size != gb[b].size) throw InputError("gradient block '" + pb[b].name + "' has the wrong size");
    for (std::size_t i = 0; i < gb[b].size; ++i) {
      if (!std::isfinite(gb[b].data[i])) {
        throw DivergenceError("non-finite gradient in '" + gb[b].name + "' at index " + std::to_string(i));
      }
    }
    total += pb[b].size;
  }
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total) throw InputError("optimizer state does not match parameters");

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (std::size_t b = 0; b < pb.size(); ++b) {
    const bool is_delay = pb[b].kind == BlockKind::Delay;
    const bool frozen = is_delay && !options.learnable_delays;
    const double rate = is_delay ? lr * options.delay_lr_multiplier : lr;
    for (std::size_t i = 0; i < pb[b].size; ++i, ++k) {
      const double g = gb[b].data[i];
      state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
      state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
      if (frozen) continue;
      const double m_hat = state.m[k] / bc1;
      const double v_hat = state.v[k] / bc2;
      pb[b].data[i] -= rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  project_delays_in_place(params.delays);
  if (options.enforce_stability) {
    const double bound = 1.0 / static_cast<double>(std::max(1, options.degree_bound));
    params.c = std::clamp(params.c, 1e-6 * bound, bound);
  }
}

Metrics metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw InputError("metric inputs differ in shape");
  if (pred.size() == 0) throw InputError("metrics of empty inputs");
  Metrics m;
  const Eigen::ArrayXXd e = (truth - pred).array();
  m.mae = e.abs().mean();
  m.rmse = std::sqrt(e.square().mean());
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      const double y = std::abs(truth(i, j));
      if (y > 1e-3) {
        sum += std::abs(e(i, j)) / y;
        ++count;
      }
    }
  }
  if (count == 0) {
    m.mape = std::numeric_limits<double>::quiet_NaN();
    m.mape_defined = false;
  } else {
    m.mape = 100.0 * sum / static_cast<double>(count);
  }
  return m;
}

ModelConfig model_config_for(const TrainConfig& config, double interval_minutes) {
  return ModelConfig{config.eta, interval_minutes / config.frame_spacing};
}

std::vector<double> target_times(int window_in, int window_out, double spacing) {
  std::vector<double> t(static_cast<std::size_t>(window_out));
  const double end = (window_in - 1) * spacing;
  for (int k = 0; k < window_out; ++k) t[k] = end + (k + 1) * spacing;
  return t;
}

double window_loss(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                   const Eigen::MatrixXd& target, std::span<const double> requests, double delta,
                   const ModelConfig& config, ModelParams* grads) {
  const ForwardPass pass = run_forward(params, graph, window, requests, config);
  const double loss = huber_loss(pass.outputs, target, delta);
  if (grads != nullptr) {
    run_backward(params, graph, window, pass, huber_grad(pass.outputs, target, delta), *grads, config);
  }
  return loss;
}

Evaluation evaluate_windows(const ModelParams& params, const TrafficGraph& graph, const std::vector<WindowPair>& wins,
                            const Standardizer& scaler, const TrainConfig& config, double interval_minutes) {
  Evaluation ev;
  if (wins.empty()) throw InputError("no windows to evaluate");
  const ModelConfig mc = model_config_for(config, interval_minutes);
  const auto requests = target_times(config.window_in, config.window_out, config.frame_spacing);
  const Eigen::Index rows = static_cast<Eigen::Index>(wins.size()) * config.window_out;
  ev.predictions.resize(rows, graph.node_count());
  ev.truth.resize(rows, graph.node_count());
  for (std::size_t w = 0; w < wins.size(); ++w) {
    WindowInput in{scaler.apply(wins[w].input), config.frame_spacing, wins[w].start_minute};
    const ForwardPass pass = run_forward(params, graph, in, requests, mc);
    ev.predictions.middleRows(static_cast<Eigen::Index>(w) * config.window_out, config.window_out) =
        scaler.invert(pass.outputs);
    ev.truth.middleRows(static_cast<Eigen::Index>(w) * config.window_out, config.window_out) = wins[w].target;
  }
  ev.metrics = metrics(ev.predictions, ev.truth);
  return ev;
}

namespace {

struct PreparedWindow {
  WindowInput input;
  Eigen::MatrixXd target;  // standardized
};

void add_into(ModelParams& acc, ModelParams& g) {
  auto a = acc.blocks();
  auto b = g.blocks();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size; ++i) a[k].data[i] += b[k].data[i];
}

void scale(ModelParams& p, double s) {
  for (ParamBlock& b : p.blocks())
    for (std::size_t i = 0; i < b.size; ++i) b.data[i] *= s;
}

}  // namespace

TrainResult train(const DatasetSplit& split, const TrafficGraph& graph, const TrainConfig& config,
                  const ModelParams* initial, const EpochCallback& on_epoch) {
  if (config.batch_size < 1 || config.epochs < 0 || !(config.learning_rate >= 0.0) || !(config.delta > 0.0) ||
      !(config.eta > 0.0) || !(config.frame_spacing > 0.0)) {
    throw InputError("invalid training configuration");
  }
  if (split.train.nodes() != graph.node_count()) throw InputError("flow columns do not match graph node count");

  TrainResult result;
  result.scaler = fit_standardizer(split.train.values);
  const double interval = split.train.interval_minutes;
  const ModelConfig mc = model_config_for(config, interval);
  const double tau_max = config.window_in * config.frame_spacing;

  ModelParams params;
  if (initial != nullptr) {
    params = *initial;
  } else {
    DelayTable delays = DelayTable::zeros(graph, tau_max);
    if (config.delay_init == DelayInit::Mcc) {
      delays = estimate_all_delays(split.train, graph, config.window_in);
      for (std::size_t e = 0; e < delays.size(); ++e) {
        delays.tau_offpeak[e] *= config.frame_spacing;
        delays.tau_peak[e] *= config.frame_spacing;
      }
    }
    delays.tau_max = tau_max;
    params = init_params(1, config.hidden_dim, 1, graph, config.seed, tau_max, &delays);
  }
  params.delays.learnable = config.learnable_delays;

  const auto train_wins = windows(split.train, config.window_in, config.window_out, config.stride);
  if (train_wins.empty()) throw InputError("training split yields no windows");
  std::vector<WindowPair> val_wins;
  if (split.val.steps() >= config.window_in + config.window_out) {
    val_wins = windows(split.val, config.window_in, config.window_out, config.stride);
  }
  std::vector<PreparedWindow> prepared;
  prepared.reserve(train_wins.size());
  for (const WindowPair& w : train_wins) {
    prepared.push_back({WindowInput{result.scaler.apply(w.input), config.frame_spacing, w.start_minute},
                        result.scaler.apply(w.target)});
  }
  const auto requests = target_times(config.window_in, config.window_out, config.frame_spacing);

  {
    double sum = 0.0;
    for (const PreparedWindow& w : prepared) {
      sum += window_loss(params, graph, w.input, w.target, requests, config.delta, mc, nullptr);
    }
    result.initial_loss = sum / static_cast<double>(prepared.size());
  }

  AdamOptions adam{config.learnable_delays, config.delay_lr_multiplier, config.enforce_stability, graph.max_degree()};
  OptimizerState opt;
  std::mt19937_64 rng(config.seed ^ 0x5eed5eedULL);
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  const int threads = std::max(1, config.threads);

  double best_mae = std::numeric_limits<double>::infinity();
  result.best = params;
  const ModelParams zero = params.zeros_like();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    // Indexed by window so the epoch mean does not depend on the shuffle.
    std::vector<double> window_losses(prepared.size(), 0.0);
    std::size_t seen = 0;
    int batches = 0;
    bool stop = false;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::size_t count = end - begin;
      std::vector<ModelParams> grads(count, zero);
      std::vector<double> losses(count, 0.0);
      auto work = [&](std::size_t first, std::size_t last) {
        for (std::size_t k = first; k < last; ++k) {
          const PreparedWindow& w = prepared[order[begin + k]];
          losses[k] = window_loss(params, graph, w.input, w.target, requests, config.delta, mc, &grads[k]);
        }
      };
      if (threads == 1 || count == 1) {
        work(0, count);
      } else {
        std::vector<std::thread> pool;
        const std::size_t per = (count + threads - 1) / threads;
        for (std::size_t first = 0; first < count; first += per) pool.emplace_back(work, first, std::min(count, first + per));
        for (auto& th : pool) th.join();
      }
      // Fixed reduction order keeps runs bitwise reproducible.
      ModelParams total = zero;
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        add_into(total, grads[k]);
        batch_loss += losses[k];
        window_losses[order[begin + k]] = losses[k];
      }
      seen += count;
      batch_loss /= static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      scale(total, 1.0 / static_cast<double>(count));
      adam_step(opt, params, total, config.learning_rate, adam);
      ++batches;
      if (config.max_steps > 0 && opt.step >= config.max_steps) {
        stop = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    {
      double sum = 0.0;
      for (double l : window_losses) sum += l;  // unseen windows after an early stop hold 0
      rec.train_loss = sum / static_cast<double>(std::max<std::size_t>(1, seen));
    }
    if (!val_wins.empty()) {
      const Evaluation ev = evaluate_windows(params, graph, val_wins, result.scaler, config, interval);
      rec.val_mae = ev.metrics.mae;
      rec.val_rmse = ev.metrics.rmse;
      rec.val_mape = ev.metrics.mape;
      if (ev.metrics.mae < best_mae) {
        best_mae = ev.metrics.mae;
        result.best = params;
        result.best_epoch = epoch;
      }
    } else {
      rec.val_mae = rec.val_rmse = rec.val_mape = std::numeric_limits<double>::quiet_NaN();
      result.best = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch && !on_epoch(rec, params)) stop = true;
    if (stop) break;
  }
  result.last = params;
  result.steps = opt.step;
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_mae,val_rmse,val_mape\n";
  char buf[256];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.train_loss, r.val_mae, r.val_rmse,
                  r.val_mape);
    out << buf;
  }
}

int threads_from_env() {
  const char* v = std::getenv("STDDE_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

}  // namespace stdde
