#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stdde/data.hpp"
#include "stdde/model.hpp"
#include "stdde/standardize.hpp"

namespace stdde {

enum class DelayInit { Mcc, Zero };

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 32;
  int epochs = 200;
  double delta = 1.0;  // Huber knee, standardized units
  double eta = 0.25;   // solver step, grid units
  bool enforce_stability = false;
  std::uint64_t seed = 0;
  bool learnable_delays = true;
  double delay_lr_multiplier = 1.0;
  DelayInit delay_init = DelayInit::Mcc;
  int hidden_dim = 64;
  int window_in = 12;
  int window_out = 12;
  int stride = 1;
  double frame_spacing = 1.0;  // grid units between consecutive data rows
  int threads = 1;
  bool shuffle = true;
  long max_steps = 0;  // optimizer steps cap; 0 means none
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamOptions {
  bool learnable_delays = true;
  double delay_lr_multiplier = 1.0;
  bool enforce_stability = false;
  int degree_bound = 1;
};

/// Bias-corrected Adam over every parameter block, then delay projection and,
/// when enforcing stability, c clamped into (0, 1/K]. Throws DivergenceError
/// on a non-finite gradient before touching anything.
void adam_step(OptimizerState& state, ModelParams& params, ModelParams& grads, double lr,
               const AdamOptions& options = {});

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // NaN when every truth entry is masked
  bool mape_defined = true;
};

/// MAE, RMSE and MAPE (percent, over |truth| > 1e-3).
Metrics metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double val_mape = 0.0;
};

struct TrainResult {
  ModelParams best;
  ModelParams last;
  Standardizer scaler;
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;
  int best_epoch = 0;
  long steps = 0;
};

/// Model settings implied by a training configuration and a data interval.
ModelConfig model_config_for(const TrainConfig& config, double interval_minutes);

/// Window times at which the targets sit, given the input window length.
std::vector<double> target_times(int window_in, int window_out, double spacing);

/// Mean Huber loss of one standardized window; accumulates its gradient into
/// `grads` when non-null.
double window_loss(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                   const Eigen::MatrixXd& target, std::span<const double> requests, double delta,
                   const ModelConfig& config, ModelParams* grads);

/// Raw-scale predictions for each window, stacked vertically (window-major),
/// and their metrics against the stacked targets.
struct Evaluation {
  Eigen::MatrixXd predictions;
  Eigen::MatrixXd truth;
  Metrics metrics;
};
Evaluation evaluate_windows(const ModelParams& params, const TrafficGraph& graph, const std::vector<WindowPair>& wins,
                            const Standardizer& scaler, const TrainConfig& config, double interval_minutes);

/// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&, const ModelParams&)>;

/// Adam over shuffled mini-batches of sliding windows drawn from split.train,
/// validation MAE after every epoch, best-validation parameters kept. When
/// `initial` is null the parameters are seeded from config.seed, with delays
/// from the MCC estimator (or zero) on the training split.
TrainResult train(const DatasetSplit& split, const TrafficGraph& graph, const TrainConfig& config,
                  const ModelParams* initial = nullptr, const EpochCallback& on_epoch = {});

/// `epoch,train_loss,val_mae,val_rmse,val_mape`.
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

/// Number of worker threads from STDDE_THREADS (default 1).
int threads_from_env();

}  // namespace stdde
