#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "minimax/anomaly.hpp"
#include "minimax/config.hpp"
#include "minimax/dataset.hpp"
#include "minimax/diagnostics.hpp"
#include "minimax/losses.hpp"

namespace minimax {

// AdamW with decoupled weight decay and bias correction, matching the
// PyTorch update order: p -= lr*wd*p, then the Adam step.
class AdamW {
 public:
  AdamW(std::vector<Var<float>> params, const TrainConfig& cfg);

  void zero_grad();
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  std::vector<Var<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

// Learning rate after `epoch` completed epochs.
inline double scheduled_lr(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.lr_gamma, epoch);
}

struct LossOutput {
  Var<float> loss;
  std::optional<AdcDiagnostics> adc;
};

LossOutput training_loss(const FeaturePyramid<float>& enc, const FeaturePyramid<float>& dec,
                         const TrainConfig& cfg);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0;
  double lr = 0;
  std::optional<AdcDiagnostics> adc;
  std::optional<std::array<double, 4>> diagnostics;  // enc/dec variance, enc/dec entropy
};

std::string to_json_line(const StepRecord& r);

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_loss;  // mean over the epoch's steps
  double final_loss = 0;           // last step's loss
};

// Deterministic permutation of [0, n) for the given seed and epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Trains bottleneck and decoder with the encoder frozen. Writes one JSON line
// per optimiser step to `log` when given. Throws TrainingError on a
// non-finite loss.
TrainResult train(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Weights archive plus config.toml in `dir`.
void save_checkpoint(Model<float>& model, const ExperimentConfig& cfg,
                     const std::filesystem::path& dir);
struct Checkpoint {
  ExperimentConfig config;
  Model<float> model;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace minimax
