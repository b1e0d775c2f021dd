// minimaxad: synthesize data, train, evaluate, diagnose and merge reports.
//
// Exit status: 0 on success, 1 on usage/config/contract errors, 2 on I/O and
// dataset errors.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "minimax/pipeline.hpp"
#include "minimax/synth.hpp"
#include "minimax/weights.hpp"

namespace fs = std::filesystem;
using namespace minimax;
using Json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string device;
  std::string out;
};

ExperimentConfig experiment(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) cfg.train.seed = *g.seed;
  return cfg;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ConfigError("--out is required");
  return g.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw IoError("cannot write " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int cmd_synth(const Globals& g, SynthConfig sc) {
  if (g.seed) sc.seed = *g.seed;
  const auto names = synth_dataset(sc, require_out(g));
  for (const auto& n : names) std::cout << n << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  std::optional<int> epochs;
  std::string loss_mode;
  std::string preset;
  std::string init_encoder;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  ExperimentConfig cfg = experiment(g);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.preset == "fr") cfg.train.loss_mode = LossMode::Adc;
  if (a.preset == "fp") cfg.train.loss_mode = LossMode::Global;
  if (!a.loss_mode.empty()) cfg.train.loss_mode = parse_loss_mode(a.loss_mode);
  cfg.validate();
  const fs::path out = require_out(g);
  make_dirs(out);

  const auto data = load_training_set(a.data, static_cast<int>(cfg.model.input_h));
  auto model = Model<float>::init(cfg.model, cfg.train.seed);
  if (!a.init_encoder.empty()) load_weights(model, a.init_encoder, true);

  std::ofstream log(out / "train_log.jsonl");
  if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r;
  try {
    r = train(model, data, cfg.train, &log);
  } catch (const TrainingError& e) {
    Json j;
    j["error"] = e.what();
    j["step"] = e.step();
    write_text(out / "train_summary.json", j.dump(2) + "\n");
    throw;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(model, cfg, out / "checkpoint");

  Json j;
  j["images"] = data.size();
  j["steps"] = r.steps.size();
  j["final_loss"] = r.final_loss;
  j["epoch_loss"] = r.epoch_loss;
  j["seconds"] = seconds;
  write_text(out / "train_summary.json", j.dump(2) + "\n");
  std::cout << "trained " << r.steps.size() << " steps on " << data.size()
            << " images, final loss " << r.final_loss << '\n';
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  bool oracle = false;
  std::optional<float> constant;
  bool save_maps = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const int sources = !a.checkpoint.empty() + a.oracle + a.constant.has_value();
  if (sources != 1)
    throw ConfigError("give exactly one of --checkpoint, --oracle-scorer, --constant-scorer");
  const fs::path out = require_out(g);

  ExperimentConfig cfg;
  std::optional<Model<float>> model;
  if (!a.checkpoint.empty()) {
    auto ck = load_checkpoint(a.checkpoint);
    cfg = ck.config;
    model.emplace(std::move(ck.model));
  }
  // An explicit config overrides evaluation settings only; the model shape
  // always comes from the checkpoint.
  if (!g.config.empty()) cfg.eval = load_config(g.config).eval;
  cfg.eval.validate();

  const Scorer scorer = model ? model_scorer(*model)
                        : a.oracle ? oracle_scorer()
                                   : constant_scorer(*a.constant);
  const auto ev = evaluate_root(a.data, scorer, cfg.eval, static_cast<int>(cfg.model.input_h));
  write_report(out, ev.rows());
  if (a.save_maps) write_anomaly_maps(out / "maps", ev);
  std::cout << report_csv(ev.rows());
  return 0;
}

struct DiagnoseArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  int erf_index = 0;
};

int cmd_diagnose(const Globals& g, const DiagnoseArgs& a) {
  ExperimentConfig cfg;
  Model<float> model;
  if (!a.checkpoint.empty()) {
    auto ck = load_checkpoint(a.checkpoint);
    cfg = ck.config;
    model = std::move(ck.model);
  } else {
    cfg = experiment(g);
    cfg.validate();
    model = Model<float>::init(cfg.model, cfg.train.seed);
  }
  const fs::path out = require_out(g);
  make_dirs(out);
  const Split split = a.split == "train" ? Split::Train : Split::Test;

  std::vector<Sample> data;
  for (const auto& dir : discover_categories(a.data)) {
    auto s = load_split(dir, split, static_cast<int>(cfg.model.input_h));
    data.insert(data.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (data.empty()) throw DatasetError("no images under " + a.data);
  if (a.erf_index < 0 || a.erf_index >= static_cast<int>(data.size()))
    throw ConfigError("--erf-image out of range");

  const auto d = diagnose_features(model, data, cfg.eval.batch_size);
  const auto erf = erf_map(model, data[a.erf_index].image);
  write_unit_map(out / "erf.png", erf);

  Json j;
  j["split"] = a.split;
  j["images"] = d.images;
  j["encoder_variance"] = d.encoder_variance;
  j["decoder_variance"] = d.decoder_variance;
  j["encoder_entropy"] = d.encoder_entropy;
  j["decoder_entropy"] = d.decoder_entropy;
  j["erf_image"] = data[a.erf_index].path;
  write_text(out / "diagnostics.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& csvs) {
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  const std::string merged = merge_report_csvs(paths);
  if (g.out.empty()) {
    std::cout << merged;
  } else {
    write_text(g.out, merged);
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"MiniMaxAD anomaly detection: synth, train, eval, diagnose, report"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "experiment config file");
  app.add_option("--seed", g.seed, "seed for synthesis, initialisation and shuffling");
  app.add_option("--device", g.device, "compute device (env MINIMAXAD_DEVICE); only cpu");
  app.add_option("--out", g.out, "output directory (report: output file)");

  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "write a synthetic MVTec-style dataset");
  synth->add_option("--categories", sc.categories)->capture_default_str();
  synth->add_option("--normals", sc.normals_per_cat, "train images per category")->capture_default_str();
  synth->add_option("--anomalies", sc.anomalies_per_cat, "anomalous test images per category")
      ->capture_default_str();
  synth->add_option("--good", sc.good_test_per_cat, "normal test images per category (default: --anomalies)");
  synth->add_option("--resolution", sc.resolution)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train bottleneck and decoder; writes checkpoint and log");
  tr->add_option("--data", ta.data, "dataset root (one category or several)")->required();
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--loss-mode", ta.loss_mode)->check(CLI::IsMember({"global", "local", "local_hm", "adc"}));
  tr->add_option("--preset", ta.preset, "fr: adc loss, fp: global loss")->check(CLI::IsMember({"fr", "fp"}));
  tr->add_option("--init-encoder", ta.init_encoder, "weight archive with pretrained encoder tensors");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score the test split and write report.json/report.csv");
  ev->add_option("--data", ea.data)->required();
  ev->add_option("--checkpoint", ea.checkpoint);
  ev->add_flag("--oracle-scorer", ea.oracle, "use ground-truth masks as scores");
  ev->add_option("--constant-scorer", ea.constant, "score every pixel with this value");
  ev->add_flag("--save-maps", ea.save_maps, "write 16-bit anomaly map PNGs");

  DiagnoseArgs da;
  auto* dg = app.add_subcommand("diagnose", "feature variance, entropy and effective receptive field");
  dg->add_option("--data", da.data)->required();
  dg->add_option("--checkpoint", da.checkpoint, "default: freshly initialised model");
  dg->add_option("--split", da.split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  dg->add_option("--erf-image", da.erf_index, "index of the image used for the ERF map");

  std::vector<std::string> csvs;
  auto* rp = app.add_subcommand("report", "merge per-category CSVs and append a Mean row");
  rp->add_option("csv", csvs)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  resolve_device(g.device);
  if (*synth) return cmd_synth(g, sc);
  if (*tr) return cmd_train(g, ta);
  if (*ev) return cmd_eval(g, ea);
  if (*dg) return cmd_diagnose(g, da);
  return cmd_report(g, csvs);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
