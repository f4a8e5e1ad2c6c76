#pragma once

#include <string>

#include "stdde/graph.hpp"
#include "stdde/model.hpp"
#include "stdde/standardize.hpp"
#include "stdde/training.hpp"

namespace stdde {

/// Everything `predict` and `evaluate` need to rerun a trained model.
struct Checkpoint {
  ModelParams params;
  TrafficGraph graph;
  Standardizer scaler;
  TrainConfig config;
  double interval_minutes = 5.0;
};

/// Plain text, every real printed with 17 significant digits so a reload is
/// bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stdde
