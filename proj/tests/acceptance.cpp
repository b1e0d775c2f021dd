// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--work-dir DIR] [--keep]

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "minimax/pipeline.hpp"
#include "minimax/synth.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace minimax;
using testing::Rng;
using testing::random_tensor;
using D = double;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Runner {
 public:
  void run(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s > budget_s) {
      o.pass = false;
      o.detail += "; over time budget";
    }
    char head[160];
    std::snprintf(head, sizeof head, "%s %-34s %7.1fs (budget %.0fs)  ", o.pass ? "PASS" : "FAIL",
                  name.c_str(), s, budget_s);
    std::cout << head << o.detail << std::endl;
    failures_ += !o.pass;
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Anomaly-map values spread enough to reach both ADC branches.
std::vector<double> random_map(Rng& rng, std::size_t n) {
  const double offset = rng.uniform(0.0, 1.0);
  const double spread = std::pow(10.0, rng.uniform(-3.0, 0.5));
  const int kind = static_cast<int>(rng.integer(0, 2));
  std::vector<double> v(n);
  for (auto& x : v) {
    if (kind == 0) x = offset + spread * rng.uniform();
    else if (kind == 1) x = std::abs(offset + spread * rng.normal());
    else x = spread * std::exp(rng.normal());
  }
  return v;
}

Var<D> map_var(const std::vector<double>& v, Index n, Index h, Index w) {
  Tensor<D> t(Shape{n, 1, h, w});
  std::copy(v.begin(), v.end(), t.data());
  return Var<D>::parameter(t);
}

Var<D> param(Tensor<D> t) { return Var<D>::parameter(std::move(t)); }
Var<D> constant(Tensor<D> t) { return Var<D>::constant(std::move(t)); }

// ---------------------------------------------------------------------------

Outcome loss_oracle() {
  Rng rng(1001);
  double worst = 0;
  int branch_mismatch = 0, alpha = 0, beta = 0;
  for (int i = 0; i < 1000; ++i) {
    const Index n = rng.integer(1, 4), h = rng.integer(1, 64), w = rng.integer(1, 64);
    const auto v = random_map(rng, static_cast<std::size_t>(n * h * w));
    MiningConfig cfg;
    if (i % 2) {
      cfg.p_hard = rng.uniform(0.5, 1.0);
      cfg.p_lim = rng.uniform(0.5, 1.0);
    }
    cfg.alpha_on_squared = i % 5 == 4;
    const auto s = map_var(v, n, h, w);
    const auto r = adc_loss(s, cfg);
    const auto o = oracle::adc(v, cfg.p_hard, cfg.p_lim, cfg.alpha_on_squared);
    worst = std::max(worst, std::abs(r.loss.value().item() - o.loss));
    const bool is_alpha = r.diagnostics.branch == AdcBranch::Alpha;
    branch_mismatch += is_alpha != o.alpha_branch;
    (o.alpha_branch ? alpha : beta)++;
    const auto hm = oracle::hard_mined(v, cfg.p_lim);
    worst = std::max(worst, std::abs(hard_mined_loss(s, cfg.p_lim).value().item() - hm.loss));
  }
  return {worst <= 1e-12 && branch_mismatch == 0 && alpha > 0 && beta > 0,
          fmt("1000 instances, max |diff| %.2e, branch mismatches %.0f (alpha %.0f, beta %.0f)",
              worst, branch_mismatch, alpha, beta)};
}

BlockParams<D> random_block(const BlockSpec& spec, std::uint64_t seed) {
  ParamInit init(seed);
  auto p = BlockParams<D>::init(spec, init);
  Rng rng(seed + 100);
  const Index hidden = spec.channels * spec.expansion;
  p.grn.gamma = param(random_tensor<D>({1, hidden, 1, 1}, rng));
  p.grn.beta = param(random_tensor<D>({1, hidden, 1, 1}, rng));
  p.norm_weight = param(random_tensor<D>({1, spec.channels, 1, 1}, rng, 0.5, 1.5));
  return p;
}

FeaturePyramid<D> random_pyramid(Rng& rng, Index n, bool trainable) {
  FeaturePyramid<D> p;
  for (Index k = 0; k < 3; ++k) {
    auto t = random_tensor<D>({n, 2 + k, 4 >> k, 4 >> k}, rng);
    p.levels[k] = trainable ? param(t) : constant(t);
  }
  return p;
}

Outcome gradient_checks() {
  constexpr int kInstances = 50;
  Rng rng(1002);
  std::ostringstream detail;
  bool ok = true;
  auto report = [&](const char* name, double worst, long checked) {
    ok = ok && worst < 1e-3;
    detail << name << " " << fmt("%.1e", worst) << " (" << checked << ") ";
  };

  double worst = 0;
  long checked = 0;
  for (int i = 0; i < kInstances; ++i) {
    const Index c = rng.integer(1, 5);
    auto x = param(random_tensor<D>({rng.integer(1, 2), c, rng.integer(1, 4), rng.integer(1, 4)}, rng));
    auto g = param(random_tensor<D>({1, c, 1, 1}, rng));
    auto b = param(random_tensor<D>({1, c, 1, 1}, rng));
    const auto r = testing::check_gradients([&] { return grn(x, g, b); }, {x, g, b}, rng);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  report("grn", worst, checked);

  for (const bool lark : {true, false}) {
    worst = 0;
    checked = 0;
    for (int i = 0; i < kInstances; ++i) {
      // Seven-wide LarK keeps the 5x5 maps informative for every branch.
      const BlockSpec spec = lark ? BlockSpec::lark(8, 7) : BlockSpec::smak(8);
      auto p = random_block(spec, 5000 + i);
      auto x = param(random_tensor<D>({rng.integer(1, 2), 8, 5, 5}, rng));
      std::vector<Var<D>> params{x};
      p.visit("b", [&](const std::string&, Var<D>& v) { params.push_back(v); });
      const auto r = testing::check_gradients(
          [&] { return lark ? lark_block_forward(x, spec, p) : smak_block_forward(x, spec, p); },
          params, rng, 1e-3, 6);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
    report(lark ? "lark_block" : "smak_block", worst, checked);
  }

  worst = 0;
  checked = 0;
  for (int i = 0; i < kInstances; ++i) {
    const Index n = rng.integer(1, 3);
    auto e = random_pyramid(rng, n, true), d = random_pyramid(rng, n, true);
    std::vector<Var<D>> params(e.levels.begin(), e.levels.end());
    params.insert(params.end(), d.levels.begin(), d.levels.end());
    const auto r = testing::check_gradients([&] { return global_cosine_loss(e, d); }, params, rng);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  report("global_cosine", worst, checked);

  worst = 0;
  checked = 0;
  for (int i = 0; i < kInstances; ++i) {
    auto s = map_var(random_map(rng, 24), 2, 3, 4);
    const auto r = testing::check_gradients([&] { return local_loss(s); }, {s}, rng, 1e-5);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  report("local", worst, checked);

  // ADC: finite differences on active pixels while the mask stays put;
  // masked pixels must carry exactly zero gradient.
  worst = 0;
  checked = 0;
  long nonzero_masked = 0;
  int instances_with_checks = 0;
  for (int i = 0; i < kInstances; ++i) {
    const auto v = random_map(rng, 64);
    auto s = map_var(v, 1, 8, 8);
    const MiningConfig cfg{rng.uniform(0.8, 0.99), rng.uniform(0.7, 0.95), i % 4 == 3};
    const auto base = adc_loss(s, cfg);
    base.loss.backward();
    const Tensor<D> g = s.grad();
    const double thr = base.diagnostics.threshold;
    long here = 0;
    for (Index p = 0; p < 64; ++p) {
      if (v[p] * v[p] < thr) {
        nonzero_masked += g[p] != 0.0;
        continue;
      }
      double& x = s.mutable_value()[p];
      const double orig = x, step = 1e-7;
      x = orig + step;
      const auto up = adc_loss(s, cfg);
      x = orig - step;
      const auto dn = adc_loss(s, cfg);
      x = orig;
      const double a = base.diagnostics.active_fraction;
      if (up.diagnostics.active_fraction != a || dn.diagnostics.active_fraction != a) continue;
      const double fd = (up.loss.value().item() - dn.loss.value().item()) / (2 * step);
      worst = std::max(worst, std::abs(fd - g[p]) / std::max({std::abs(fd), std::abs(g[p]), 1e-3}));
      ++here;
    }
    checked += here;
    instances_with_checks += here > 0;
  }
  report("adc", worst, checked);
  ok = ok && nonzero_masked == 0 && instances_with_checks >= kInstances;
  detail << "adc masked nonzero " << nonzero_masked;
  return {ok, detail.str()};
}

Outcome metric_oracles() {
  Rng rng(1003);
  double worst = 0;
  for (int i = 0; i < 500; ++i) {
    const int n = static_cast<int>(rng.integer(2, 200));
    std::vector<double> s;
    std::vector<int> y;
    const bool coarse = rng.uniform() < 0.5;
    for (int k = 0; k < n; ++k) {
      const int l = static_cast<int>(rng.integer(0, 1));
      s.push_back(coarse ? static_cast<double>(rng.integer(0, 6)) + 0.5 * l : rng.uniform() + 0.3 * l);
      y.push_back(l);
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max({worst, std::abs(auroc(s, y) - oracle::auroc(s, y)),
                      std::abs(average_precision(s, y) - oracle::average_precision(s, y)),
                      std::abs(f1_max(s, y) - oracle::f1_max(s, y))});
  }

  double worst_pro = 0;
  for (int i = 0; i < 100; ++i) {
    const int images = static_cast<int>(rng.integer(1, 3));
    std::vector<oracle::Grid> grids;
    std::vector<ScoreMap> sm;
    std::vector<MaskMap> mm;
    for (int k = 0; k < images; ++k) {
      oracle::Grid g{16, 16, {}, std::vector<int>(256, 0)};
      for (int b = 0; b < static_cast<int>(rng.integer(0, 3)); ++b) {
        const int r0 = static_cast<int>(rng.integer(0, 15)), c0 = static_cast<int>(rng.integer(0, 15));
        const int rh = static_cast<int>(rng.integer(1, 5)), cw = static_cast<int>(rng.integer(1, 5));
        for (int r = r0; r < std::min(16, r0 + rh); ++r)
          for (int c = c0; c < std::min(16, c0 + cw); ++c) g.mask[r * 16 + c] = 1;
      }
      if (k == 0) g.mask[rng.integer(0, 255)] = 1;  // at least one region overall
      const bool coarse = rng.uniform() < 0.3;
      for (int p = 0; p < 256; ++p)
        g.score.push_back((coarse ? static_cast<double>(rng.integer(0, 9)) : rng.uniform()) +
                          (g.mask[p] ? rng.uniform(0.0, 0.8) : 0.0));
      ScoreMap s(16, 16);
      MaskMap m(16, 16);
      for (int p = 0; p < 256; ++p) {
        s(p / 16, p % 16) = g.score[p];
        m(p / 16, p % 16) = static_cast<unsigned char>(g.mask[p]);
      }
      sm.push_back(s);
      mm.push_back(m);
      grids.push_back(std::move(g));
    }
    const double cap = i % 3 == 0 ? 0.3 : (i % 3 == 1 ? 1.0 : rng.uniform(0.05, 1.0));
    worst_pro = std::max(worst_pro, std::abs(aupro(sm, mm, {cap, Connectivity::Eight}) -
                                             oracle::aupro(grids, cap)));
  }

  MetricReport row;
  row.i_auroc = 0.988, row.i_ap = 0.996, row.i_f1max = 0.977, row.p_auroc = 0.961;
  row.p_ap = 0.585, row.p_f1max = 0.595, row.aupro = 0.922;
  const double m = std::round(mad(row) * 1000) / 10;
  return {worst <= 1e-12 && worst_pro <= 1e-9 && m == 86.1,
          fmt("ranking max |diff| %.2e (500), aupro max |diff| %.2e (100), mAD %.1f", worst,
              worst_pro, m)};
}

Outcome structural_invariants() {
  Rng rng(1004);
  int configs = 0;
  double merge_worst = 0, bound_violation = 0, recon_worst = 0;
  bool shapes_ok = true, grn_ok = true;
  for (int t = 0; t < 8; ++t) {
    ModelConfig cfg;
    const Index base = 4 * rng.integer(1, 3);
    cfg.stage_channels = {base, base * 2, base * 3};
    cfg.stage_depths = {{static_cast<int>(rng.integer(0, 1)), static_cast<int>(rng.integer(0, 1))},
                        {static_cast<int>(rng.integer(0, 1)), 1},
                        {1, static_cast<int>(rng.integer(0, 1))}};
    cfg.bottleneck_depth = static_cast<int>(rng.integer(1, 2));
    cfg.input_h = 32 * rng.integer(1, 3);
    cfg.input_w = 32 * rng.integer(1, 3);
    const auto model = Model<D>::init(cfg, 300 + t);
    const auto x = constant(random_tensor<D>({rng.integer(1, 2), 3, cfg.input_h, cfg.input_w}, rng));
    const auto enc = encode(x, model);
    const auto dec = decode(bottleneck(enc, model), model);
    for (std::size_t k = 0; k < 3; ++k) shapes_ok = shapes_ok && dec[k].shape() == enc[k].shape();

    const auto am = anomaly_map(enc, dec, cfg.input_h, cfg.input_w);
    for (const auto& lv : am.per_level)
      bound_violation = std::max({bound_violation, -lv.value().array().minCoeff(),
                                  lv.value().array().maxCoeff() - 2.0});
    bound_violation = std::max({bound_violation, -am.aggregated.value().array().minCoeff(),
                                am.aggregated.value().array().maxCoeff() - 6.0});
    const auto same = anomaly_map(enc, enc, cfg.input_h, cfg.input_w);
    recon_worst = std::max(recon_worst, same.aggregated.value().array().abs().maxCoeff());
    ++configs;
  }
  for (int t = 0; t < 20; ++t) {
    const Index c = rng.integer(1, 6);
    const auto x = random_tensor<D>({rng.integer(1, 3), c, rng.integer(1, 6), rng.integer(1, 6)}, rng);
    const auto y = grn(constant(x), constant(Tensor<D>({1, c, 1, 1})), constant(Tensor<D>({1, c, 1, 1})));
    grn_ok = grn_ok && (y.value().array() == x.array()).all();
  }
  for (int t = 0; t < 10; ++t) {
    const Index c = rng.integer(1, 6);
    const BlockSpec spec = t % 2 ? BlockSpec::lark(c) : BlockSpec::lark(c, 7);
    std::vector<Var<D>> branches;
    for (const auto& br : spec.dilated_branches)
      branches.push_back(constant(random_tensor<D>({c, 1, br.kernel, br.kernel}, rng)));
    const auto bias = constant(random_tensor<D>({1, c, 1, 1}, rng));
    const auto x = constant(random_tensor<D>({rng.integer(1, 2), c, rng.integer(4, 20), rng.integer(4, 20)}, rng));
    const auto a = depthwise_conv2d(x, merge_dilated_branches(spec, branches), bias).value();
    const auto b = depthwise_branches(x, spec, branches, bias).value();
    merge_worst = std::max(merge_worst, (a.array() - b.array()).abs().maxCoeff() /
                                            b.array().abs().maxCoeff());
  }
  return {shapes_ok && grn_ok && merge_worst <= 1e-5 && bound_violation <= 0 && recon_worst <= 1e-12,
          fmt("%.0f model configs; merge rel %.1e; bound excess %.1e; |S| under exact recon %.1e",
              configs, merge_worst, bound_violation, recon_worst) +
              (shapes_ok ? "" : "; shape mismatch") + (grn_ok ? "" : "; grn zero-init not identity")};
}

// ---------------------------------------------------------------------------
// End to end

struct EndToEnd {
  fs::path data;
  ExperimentConfig cfg;
  std::optional<Model<float>> model;
  TrainResult train;
  std::optional<RootEvaluation> eval;
};

Outcome end_to_end(EndToEnd& run) {
  SynthConfig sc;
  sc.seed = 7;
  sc.categories = 5;
  synth_dataset(sc, run.data);
  run.cfg.train.loss_mode = LossMode::Adc;
  run.cfg.train.epochs = 30;
  const auto data = load_training_set(run.data, 64);
  run.model.emplace(Model<float>::init(run.cfg.model, run.cfg.train.seed));
  run.train = train(*run.model, data, run.cfg.train);
  run.eval.emplace(evaluate_root(run.data, model_scorer(*run.model), run.cfg.eval, 64));
  const auto& m = run.eval->mean;
  return {m.i_auroc >= 0.90 && m.aupro >= 0.75,
          fmt("%.0f train images, %.0f steps; mean i_auroc %.3f aupro %.3f", data.size(),
              run.train.steps.size(), m.i_auroc, m.aupro) +
              fmt(" (p_auroc %.3f mAD %.3f)", m.p_auroc, mad(m))};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median of the per-step active fractions logged in the first and last five epochs.
Outcome adc_trend(const EndToEnd& run) {
  if (run.train.steps.empty()) return {false, "no training log"};
  const int epochs = run.cfg.train.epochs;
  std::vector<double> first, last;
  std::vector<std::vector<double>> per_epoch(static_cast<std::size_t>(epochs));
  for (const auto& s : run.train.steps) {
    if (!s.adc) return {false, "log line without ADC diagnostics"};
    if (s.epoch < 5) first.push_back(s.adc->active_fraction);
    if (s.epoch >= epochs - 5) last.push_back(s.adc->active_fraction);
    per_epoch[static_cast<std::size_t>(s.epoch)].push_back(s.adc->active_fraction);
  }
  const double a = median(first), b = median(last);
  // Reported for context only: the median of per-epoch means.
  std::vector<double> mf, ml;
  for (int e = 0; e < epochs; ++e) {
    const auto& v = per_epoch[static_cast<std::size_t>(e)];
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (e < 5) mf.push_back(m);
    if (e >= epochs - 5) ml.push_back(m);
  }
  return {b < a, fmt("median per-step active_fraction first 5 epochs %.6f, last 5 %.6f "
                     "(median of epoch means %.6f -> %.6f)",
                     a, b, median(mf), median(ml))};
}

Outcome determinism_and_round_trip(EndToEnd& run, const fs::path& work) {
  if (!run.model || !run.eval) return {false, "end-to-end run unavailable"};
  auto again = Model<float>::init(run.cfg.model, run.cfg.train.seed);
  const auto second = train(again, load_training_set(run.data, 64), run.cfg.train);
  const bool same_loss = second.final_loss == run.train.final_loss;

  save_checkpoint(*run.model, run.cfg, work / "checkpoint");
  const auto loaded = load_checkpoint(work / "checkpoint");
  const auto eval = evaluate_root(run.data, model_scorer(loaded.model), run.cfg.eval, 64);
  bool same_report = eval.mean.fields() == run.eval->mean.fields();
  for (std::size_t c = 0; c < eval.categories.size(); ++c)
    same_report = same_report &&
                  eval.categories[c].report.fields() == run.eval->categories[c].report.fields();
  char buf[200];
  std::snprintf(buf, sizeof buf, "final loss %.17g vs %.17g; reloaded report %s", run.train.final_loss,
                second.final_loss, same_report ? "identical" : "differs");
  return {same_loss && same_report, buf};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work_dir;
  bool keep = false;
  app.add_option("--work-dir", work_dir, "scratch directory (default: under the system temp dir)");
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir.empty()
                            ? fs::temp_directory_path() / ("minimax_acceptance_" + std::to_string(::getpid()))
                            : fs::path(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  Runner r;
  r.run("loss-oracle-equivalence", 60, loss_oracle);
  r.run("gradient-checks", 300, gradient_checks);
  r.run("metric-oracle-equivalence", 120, metric_oracles);
  r.run("structural-invariants", 120, structural_invariants);
  EndToEnd run;
  run.data = work / "frad";
  r.run("synthetic-end-to-end", 1200, [&] { return end_to_end(run); });
  r.run("adc-active-fraction-trend", 1, [&] { return adc_trend(run); });
  r.run("determinism-and-round-trip", 1200, [&] { return determinism_and_round_trip(run, work); });
  std::cout << "SKIP full-scale-pretrained (optional, needs external weights and data; "
               "see scripts/full_scale.sh)"
            << std::endl;

  if (!keep) fs::remove_all(work);
  std::cout << (r.failures() ? "FAILED: " + std::to_string(r.failures()) + " criteria" : "ALL PASSED")
            << std::endl;
  return r.failures() ? 1 : 0;
}
