#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "minimax/losses.hpp"
#include "minimax/metrics.hpp"
#include "minimax/model.hpp"

namespace minimax {

enum class LossMode { Global, Local, LocalHardMined, Adc };

const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct TrainConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 5e-5;
  double lr_gamma = 0.995;  // per epoch
  int batch_size = 16;
  int epochs = 30;
  LossMode loss_mode = LossMode::Adc;
  MiningConfig mining;
  std::uint64_t seed = 0;
  bool log_diagnostics = true;

  void validate() const;
};

struct EvalConfig {
  double smoothing_sigma = 4.0;
  double fpr_cap = 0.3;
  Connectivity connectivity = Connectivity::Eight;
  int batch_size = 16;

  void validate() const;
  AuproOptions aupro() const { return {fpr_cap, connectivity}; }
};

struct ExperimentConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  EvalConfig eval;

  void validate() const {
    model.validate();
    train.validate();
    eval.validate();
  }
};

// Sectioned key = value text:
//
//   [model]
//   stage_channels = [32, 64, 128]
//   lark_depths = [0, 1, 2]
//   [train]
//   preset = "fr"          # fr: adc loss, fp: global loss
//   loss_mode = "adc"
//
// '#' starts a comment. Unknown sections or keys are ConfigErrors naming the
// line. Keys not given keep their defaults.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Complete text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace minimax
