#include "minimax/train.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "minimax/weights.hpp"

namespace minimax {

AdamW::AdamW(std::vector<Var<float>> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.lr),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      wd_(cfg.weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  const float step = static_cast<float>(lr_ / bc1);
  const float decay = static_cast<float>(1 - lr_ * wd_);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float sqrt_bc2 = static_cast<float>(std::sqrt(bc2)), eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const Tensor<float> grad = p.grad();
    const auto& g = grad.array();
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    auto& w = p.mutable_value().array();
    w *= decay;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    w -= step * m / (v.sqrt() / sqrt_bc2 + eps);
  }
}

LossOutput training_loss(const FeaturePyramid<float>& enc, const FeaturePyramid<float>& dec,
                         const TrainConfig& cfg) {
  if (cfg.loss_mode == LossMode::Global) return {global_cosine_loss(enc, dec), std::nullopt};
  const Shape s0 = enc[0].shape();
  // Level 1 sits at stride 4 of the input.
  const auto map = anomaly_map(enc, dec, s0.h * 4, s0.w * 4);
  switch (cfg.loss_mode) {
    case LossMode::Local: return {local_loss(map.aggregated), std::nullopt};
    case LossMode::LocalHardMined:
      return {hard_mined_loss(map.aggregated, cfg.mining.p_lim), std::nullopt};
    default: {
      auto r = adc_loss(map.aggregated, cfg.mining);
      return {r.loss, r.diagnostics};
    }
  }
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["lr"] = r.lr;
  if (r.adc) {
    const auto& d = *r.adc;
    j["branch"] = to_string(d.branch);
    j["threshold"] = d.threshold;
    j["active_fraction"] = d.active_fraction;
    j["alpha"] = d.alpha;
    j["beta_q"] = d.beta_q;
    j["sigma"] = d.sigma;
    j["count_a"] = d.count_a;
    j["count_b"] = d.count_b;
  }
  if (r.diagnostics) {
    j["encoder_variance"] = (*r.diagnostics)[0];
    j["decoder_variance"] = (*r.diagnostics)[1];
    j["encoder_entropy"] = (*r.diagnostics)[2];
    j["decoder_entropy"] = (*r.diagnostics)[3];
  }
  return j.dump();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::mt19937_64 gen(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch) + 1);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // Fisher-Yates on raw draws so the order does not depend on the standard library.
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[gen() % i]);
  return idx;
}

TrainResult train(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                  std::ostream* log) {
  cfg.validate();
  if (data.empty()) throw DatasetError("training set is empty");
  model.set_encoder_frozen(true);
  AdamW opt(model.trainable_parameters(), cfg);
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(scheduled_lr(cfg, epoch));
    const auto order = epoch_order(data.size(), cfg.seed, epoch);
    double epoch_sum = 0;
    int epoch_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const Sample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
        batch.push_back(&data[order[i]]);
      const auto images = Var<float>::constant(stack_images(batch));
      const auto enc = encode(images, model).detach();
      const auto dec = decode(bottleneck(enc, model), model);
      // A non-finite map can hide behind an empty ADC mask, so check features too.
      for (std::size_t k = 0; k < 3; ++k)
        if (!dec[k].value().all_finite())
          throw TrainingError("non-finite decoder features at step " + std::to_string(step), step);
      const auto out = training_loss(enc, dec, cfg);
      const double loss = out.loss.value().item();
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at step " + std::to_string(step), step);
      opt.zero_grad();
      out.loss.backward();
      opt.step();

      StepRecord rec{step, epoch, loss, opt.lr(), out.adc, std::nullopt};
      if (cfg.log_diagnostics)
        rec.diagnostics = std::array<double, 4>{feature_variance(enc), feature_variance(dec),
                                                feature_entropy(enc), feature_entropy(dec)};
      if (log) *log << to_json_line(rec) << '\n';
      result.steps.push_back(std::move(rec));
      epoch_sum += loss;
      ++epoch_steps;
      ++step;
    }
    result.epoch_loss.push_back(epoch_sum / epoch_steps);
  }
  if (log) log->flush();
  result.final_loss = result.steps.empty() ? 0.0 : result.steps.back().loss;
  return result;
}

void save_checkpoint(Model<float>& model, const ExperimentConfig& cfg,
                     const std::filesystem::path& dir) {
  save_weights(model, dir);
  save_config(cfg, dir / "config.toml");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  auto cfg = load_config(dir / "config.toml");
  auto model = Model<float>::init(cfg.model, 0);
  load_weights(model, dir);
  return {cfg, std::move(model)};
}

}  // namespace minimax
