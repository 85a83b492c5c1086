// Command-line entry point for the drowsiness-aware adaptive braking pipeline:
// capsule benchmarking, detector training, agent training, paired evaluation
// and report generation.

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vigil/agent.hpp"
#include "vigil/capsule.hpp"
#include "vigil/config.hpp"
#include "vigil/detector.hpp"
#include "vigil/ecg.hpp"
#include "vigil/env.hpp"
#include "vigil/rundir.hpp"

namespace fs = std::filesystem;
using namespace vigil;

namespace {

struct GlobalArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  std::string out_dir;
};

RunConfig build_config(const GlobalArgs& args) {
  RunConfig cfg = RunConfig::defaults();
  if (!args.config_file.empty()) cfg.load_file(args.config_file);
  for (const auto& kv : args.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

struct EcgInputs {
  std::string signal;
  std::string events;
  std::string meta;
};

struct Pipeline {
  EcgRecording recording;  // raw
  RrSeries rr;             // from the filtered recording
  std::vector<Window> windows;
};

Pipeline run_ecg_pipeline(const EcgInputs& in, const RunConfig& cfg) {
  EcgMetadata meta = load_metadata(in.meta);
  Pipeline p;
  p.recording = load_recording(in.signal, in.events, meta.sample_rate_hz, meta.resolution_bits);
  EcgRecording filtered =
      bandpass_filter(p.recording, cfg.get_double("ecg.low_hz"), cfg.get_double("ecg.high_hz"));
  p.rr = detect_r_peaks(filtered);
  p.windows = extract_windows(p.recording, cfg.get_long("capsule.window_samples"),
                              cfg.get_double("capsule.min_gap_s"), cfg.dew_anchor());
  return p;
}

QNetworkShape default_shape() { return {}; }

void save_checkpoint(RunDirectory& run, TrainingResult& result, Variant variant,
                     const RunConfig& cfg) {
  fs::create_directories(run.file("checkpoint"));
  result.policy.save(run.file("checkpoint/policy.txt"));
  run.record_artifact("checkpoint/policy.txt");
  result.target.save(run.file("checkpoint/target.txt"));
  run.record_artifact("checkpoint/target.txt");
  std::string meta = "variant=" + std::string(variant_name(variant)) + "\n";
  meta += "obs_dim=5\nactions=6\ntrunk=128,256,128\nstream=128,64\n";
  meta += "gamma=" + cfg.get_string("agent.gamma") + "\n";
  run.write_text("checkpoint/agent.txt", meta);
}

QNetwork load_checkpoint(const fs::path& checkpoint_dir) {
  auto kv = read_kv(checkpoint_dir / "agent.txt");
  Variant variant = parse_variant(kv.at("variant"));
  Rng zero(0);
  QNetwork net(variant, static_cast<int>(parse_long(kv.at("obs_dim"), "agent.txt")),
               static_cast<int>(parse_long(kv.at("actions"), "agent.txt")), default_shape(),
               zero);
  net.load(checkpoint_dir / "policy.txt");
  return net;
}

// --------------------------------------------------------------------------
// benchmark-capsules

struct BenchmarkRow {
  CapsuleConfig config;
  CvReport report;
  bool skipped = false;
  std::string skip_reason;
};

int cmd_benchmark_capsules(const GlobalArgs& g, const EcgInputs& in, int configs_limit,
                           int folds) {
  RunConfig cfg = build_config(g);
  RunDirectory run = RunDirectory::create(g.out_dir.empty() ? "runs/benchmark" : g.out_dir,
                                          "benchmark-capsules", cfg, g.seed,
                                          {in.signal, in.events, in.meta});
  Pipeline p = run_ecg_pipeline(in, cfg);
  if (p.windows.empty()) throw Error("no qualifying drowsiness events in the recording");

  long L = cfg.get_long("capsule.window_samples");
  auto configs = enumerate_configs(L, p.recording.sample_rate_hz, cfg.get_int("capsule.n_min"),
                                   cfg.get_int("capsule.n_max"), cfg.get_int("capsule.c_min_s"),
                                   cfg.get_int("capsule.c_max_s"));
  if (configs_limit > 0 && static_cast<int>(configs.size()) > configs_limit) {
    configs.resize(configs_limit);
  }

  DetectorConfig detector = cfg.detector_config();
  std::vector<BenchmarkRow> rows(configs.size());
  std::atomic<std::size_t> next{0};
  int workers = cfg.get_int("benchmark.workers");
  if (workers <= 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<int>(workers, static_cast<int>(configs.size()));

  auto evaluate_config = [&](std::size_t i) {
    BenchmarkRow& row = rows[i];
    row.config = configs[i];
    try {
      auto dataset = build_dataset(p.rr, p.windows, configs[i], p.recording.sample_rate_hz);
      row.report = cross_validate(dataset, detector, folds,
                                  derive_seed(g.seed, configs[i].label()));
    } catch (const Error& e) {
      row.skipped = true;
      row.skip_reason = e.what();
    }
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) evaluate_config(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < configs.size(); i = next.fetch_add(1)) {
          evaluate_config(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // summary sorted by mean accuracy, fold rows in summary order
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].skipped) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].report.mean_accuracy != rows[b].report.mean_accuracy) {
      return rows[a].report.mean_accuracy > rows[b].report.mean_accuracy;
    }
    return rows[a].config.label() < rows[b].config.label();
  });

  std::string fold_csv = "label,C,N,M,fold,accuracy,f1\n";
  std::string summary_csv = "label,C,N,M,mean_accuracy,mean_f1\n";
  for (std::size_t i : order) {
    const auto& row = rows[i];
    std::string prefix = row.config.label() + ',' + std::to_string(row.config.capsule_samples) +
                         ',' + std::to_string(row.config.capsule_count) + ',' +
                         format_double(row.config.overlap, 12);
    for (std::size_t f = 0; f < row.report.fold_accuracy.size(); ++f) {
      fold_csv += prefix + ',' + std::to_string(f) + ',' +
                  format_double(row.report.fold_accuracy[f], 12) + ',' +
                  format_double(row.report.fold_f1[f], 12) + '\n';
    }
    summary_csv += prefix + ',' + format_double(row.report.mean_accuracy, 12) + ',' +
                   format_double(row.report.mean_f1, 12) + '\n';
  }
  run.write_text("benchmark_folds.csv", fold_csv);
  run.write_text("benchmark_summary.csv", summary_csv);
  std::string skipped;
  for (const auto& row : rows) {
    if (row.skipped) skipped += row.config.label() + ": " + row.skip_reason + "\n";
  }
  if (!skipped.empty()) run.write_text("skipped.txt", skipped);
  std::printf("benchmarked %zu configurations (%zu skipped) -> %s\n", order.size(),
              rows.size() - order.size(), run.path().c_str());
  return 0;
}

// --------------------------------------------------------------------------
// train-detector

int cmd_train_detector(const GlobalArgs& g, const EcgInputs& in) {
  RunConfig cfg = build_config(g);
  RunDirectory run = RunDirectory::create(g.out_dir.empty() ? "runs/detector" : g.out_dir,
                                          "train-detector", cfg, g.seed,
                                          {in.signal, in.events, in.meta});
  Pipeline p = run_ecg_pipeline(in, cfg);
  if (p.windows.empty()) throw Error("no qualifying drowsiness events in the recording");
  long L = cfg.get_long("capsule.window_samples");
  CapsuleConfig capsule = parse_config_label(cfg.get_string("capsule.config"), L);
  auto dataset = build_dataset(p.rr, p.windows, capsule, p.recording.sample_rate_hz);
  save_dataset(run.file("dataset.txt"), dataset);
  run.record_artifact("dataset.txt");

  DetectorConfig detector = cfg.detector_config();
  int folds = cfg.get_int("detector.folds");
  CvReport report = cross_validate(dataset, detector, folds, derive_seed(g.seed, "cv"));
  std::string cv_csv = "fold,accuracy,f1\n";
  for (std::size_t f = 0; f < report.fold_accuracy.size(); ++f) {
    cv_csv += std::to_string(f) + ',' + format_double(report.fold_accuracy[f], 12) + ',' +
              format_double(report.fold_f1[f], 12) + '\n';
  }
  cv_csv += "mean," + format_double(report.mean_accuracy, 12) + ',' +
            format_double(report.mean_f1, 12) + '\n';
  run.write_text("cv_report.csv", cv_csv);
  std::string confusion = "true\\pred,0,1\n";
  for (int t = 0; t < 2; ++t) {
    confusion += std::to_string(t) + ',' + std::to_string(report.confusion[t][0]) + ',' +
                 std::to_string(report.confusion[t][1]) + '\n';
  }
  run.write_text("confusion.csv", confusion);

  DetectorModel model = train_detector(dataset, detector, derive_seed(g.seed, "train"));
  save_detector(run.file("model"), model);
  run.record_artifact("model/weights.txt");
  run.record_artifact("model/standardizer.txt");
  run.record_artifact("model/model.txt");
  std::printf("cv mean accuracy %.4f, f1 %.4f; model bundle -> %s\n", report.mean_accuracy,
              report.mean_f1, run.file("model").c_str());
  return 0;
}

// --------------------------------------------------------------------------
// train-agent

struct LiveDetector {
  EcgRecording recording;
  CapsuleConfig capsule{6400, 6, 0.72};
  DetectorModel model;
  ThetaBox box;
  std::unique_ptr<DetectorThread> thread;
};

std::unique_ptr<LiveDetector> start_live_detector(const RunConfig& cfg) {
  auto live = std::make_unique<LiveDetector>();
  const std::string bundle = cfg.get_string("live.detector_bundle");
  if (bundle.empty()) throw ConfigError("live drowsy mode requires live.detector_bundle");
  live->model = load_detector(bundle);
  EcgMetadata meta = load_metadata(cfg.get_string("live.meta"));
  live->recording = load_recording(cfg.get_string("live.ecg"), cfg.get_string("live.events"),
                                   meta.sample_rate_hz, meta.resolution_bits);
  long L = cfg.get_long("capsule.window_samples");
  live->capsule = parse_config_label(live->model.config_label, L);
  live->thread = std::make_unique<DetectorThread>(
      live->recording, live->capsule, live->model, cfg.get_double("capsule.inference_overlap"),
      live->box, L);
  return live;
}

int cmd_train_agent(const GlobalArgs& g, const std::string& variant_flag, int episodes_flag) {
  RunConfig cfg = build_config(g);
  if (!variant_flag.empty()) cfg.set("agent.variant", variant_flag);
  if (episodes_flag > 0) cfg.set("agent.episodes", std::to_string(episodes_flag));
  RunDirectory run = RunDirectory::create(g.out_dir.empty() ? "runs/agent" : g.out_dir,
                                          "train-agent", cfg, g.seed, {});
  TrainOptions opt;
  opt.variant = parse_variant(cfg.get_string("agent.variant"));
  opt.episodes = cfg.get_int("agent.episodes");
  opt.seed = g.seed;
  opt.agent = cfg.agent_config();
  opt.env = cfg.env_config();
  opt.shape = default_shape();
  opt.drowsy_mode = cfg.drowsy_mode();
  std::unique_ptr<LiveDetector> live;
  if (opt.drowsy_mode == DrowsyMode::live) {
    live = start_live_detector(cfg);
    opt.live_theta = &live->box;
  }
  TrainingResult result = train_agent(opt);
  run.write_text("training.csv", result.report.to_csv());
  save_checkpoint(run, result, opt.variant, cfg);
  double final_ma = result.report.rows.empty() ? 0.0 : result.report.rows.back().moving_avg_10;
  std::printf("%s: %d episodes, %ld train steps, final 10-episode average %.3f -> %s\n",
              variant_name(opt.variant), opt.episodes, result.train_steps, final_ma,
              run.path().c_str());
  return 0;
}

// --------------------------------------------------------------------------
// eval-paired

int cmd_eval_paired(const GlobalArgs& g, const std::string& checkpoint, int scenarios_flag) {
  RunConfig cfg = build_config(g);
  if (scenarios_flag > 0) cfg.set("eval.scenarios", std::to_string(scenarios_flag));
  fs::path ckpt(checkpoint);
  if (!fs::exists(ckpt / "agent.txt")) {
    // accept a run directory produced by train-agent
    if (fs::exists(ckpt / "checkpoint" / "agent.txt")) {
      ckpt = ckpt / "checkpoint";
    } else {
      throw IoError("no checkpoint at " + checkpoint);
    }
  }
  RunDirectory run = RunDirectory::create(g.out_dir.empty() ? "runs/eval" : g.out_dir,
                                          "eval-paired", cfg, g.seed,
                                          {ckpt / "agent.txt", ckpt / "policy.txt"});
  QNetwork net = load_checkpoint(ckpt);
  EvalOptions opt;
  opt.n_scenarios = cfg.get_int("eval.scenarios");
  opt.seed = g.seed;
  opt.env = cfg.env_config();
  opt.keep_step_logs = true;
  auto pairs = evaluate_paired(net, opt);
  EvalReport report = summarize_eval(pairs);
  run.write_text("summary.csv", eval_summary_csv(report));
  fs::create_directories(run.file("episodes"));
  fs::create_directories(run.file("scenarios"));
  char name[64];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::snprintf(name, sizeof(name), "scenarios/scenario_%03zu.txt", i);
    pairs[i].scenario.save(run.file(name));
    run.record_artifact(name);
    for (const ArmResult* arm : {&pairs[i].alert, &pairs[i].drowsy}) {
      std::snprintf(name, sizeof(name), "episodes/scenario_%03zu_%s.csv", i,
                    arm->drowsy_arm ? "drowsy" : "alert");
      std::string csv;
      for (const auto& line : arm->step_log) {
        csv += line;
        csv += '\n';
      }
      run.write_text(name, csv);
    }
  }
  std::printf("evaluated %d paired scenarios: success rate %.4f, mean reward %.3f -> %s\n",
              report.n_scenarios, report.success_rate, report.mean_reward, run.path().c_str());
  return 0;
}

// --------------------------------------------------------------------------
// report

struct SeriesAccumulator {
  std::vector<double> sum, sum_sq, min_v, max_v;
  std::vector<long> count;

  void add(std::size_t t, double v) {
    if (t >= sum.size()) {
      sum.resize(t + 1, 0.0);
      sum_sq.resize(t + 1, 0.0);
      min_v.resize(t + 1, std::numeric_limits<double>::infinity());
      max_v.resize(t + 1, -std::numeric_limits<double>::infinity());
      count.resize(t + 1, 0);
    }
    sum[t] += v;
    sum_sq[t] += v * v;
    min_v[t] = std::min(min_v[t], v);
    max_v[t] = std::max(max_v[t], v);
    count[t] += 1;
  }

  double mean(std::size_t t) const { return sum[t] / count[t]; }
  double sd(std::size_t t) const {
    double m = mean(t);
    return std::sqrt(std::max(0.0, sum_sq[t] / count[t] - m * m));
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int cmd_report(const GlobalArgs& g, const std::string& run_dir) {
  RunConfig cfg = build_config(g);
  RunDirectory source = RunDirectory::open(run_dir);
  RunDirectory out = RunDirectory::create(g.out_dir.empty() ? "runs/report" : g.out_dir, "report",
                                          cfg, g.seed, {source.file("manifest.txt")});
  bool produced = false;

  if (fs::exists(source.file("training.csv"))) {
    // reward curves are already plot-ready series
    out.write_text("reward_series.csv", read_file(source.file("training.csv")));
    produced = true;
  }

  if (fs::exists(source.file("episodes"))) {
    SeriesAccumulator speed, distance, throttle, brake;
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(source.file("episodes"))) {
      logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    double dt = cfg.env_config().dt;
    for (const auto& log : logs) {
      auto lines = read_lines(log);
      for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = split_csv(lines[i]);
        if (cells.size() < 11) continue;
        std::size_t t = static_cast<std::size_t>(
            std::llround(parse_double(cells[0], log.string()) / dt));
        speed.add(t, parse_double(cells[1], log.string()));
        distance.add(t, parse_double(cells[2], log.string()));
        throttle.add(t, parse_double(cells[6], log.string()));
        brake.add(t, parse_double(cells[7], log.string()));
      }
    }
    std::string speed_csv = "t,speed_mean,speed_sd\n";
    std::string dist_csv = "t,distance_min,distance_max,distance_mean\n";
    std::string control_csv = "t,throttle_mean,throttle_sd,brake_mean,brake_sd\n";
    for (std::size_t t = 0; t < speed.sum.size(); ++t) {
      if (speed.count[t] == 0) continue;
      std::string ts = format_double(double(t) * dt, 12);
      speed_csv += ts + ',' + format_double(speed.mean(t), 12) + ',' +
                   format_double(speed.sd(t), 12) + '\n';
      dist_csv += ts + ',' + format_double(distance.min_v[t], 12) + ',' +
                  format_double(distance.max_v[t], 12) + ',' +
                  format_double(distance.mean(t), 12) + '\n';
      control_csv += ts + ',' + format_double(throttle.mean(t), 12) + ',' +
                     format_double(throttle.sd(t), 12) + ',' + format_double(brake.mean(t), 12) +
                     ',' + format_double(brake.sd(t), 12) + '\n';
    }
    out.write_text("speed_series.csv", speed_csv);
    out.write_text("distance_series.csv", dist_csv);
    out.write_text("control_series.csv", control_csv);
    produced = true;
  }

  if (fs::exists(source.file("summary.csv"))) {
    out.write_text("summary.csv", read_file(source.file("summary.csv")));
    produced = true;
  }

  if (!produced) throw IoError(run_dir + " holds neither training nor evaluation outputs");
  std::printf("report -> %s\n", out.path().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drowsiness-aware adaptive braking pipeline"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_file, "key=value config file")->envname("VIGIL_CONFIG");
  app.add_option("--set", g.overrides, "override a config key (key=value, repeatable)");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out_dir, "run directory");

  EcgInputs ecg_in;
  int configs_limit = 0;
  int folds = 5;
  auto* bench = app.add_subcommand("benchmark-capsules",
                                   "cross-validate the detector over capsule configurations");
  bench->add_option("--ecg", ecg_in.signal, "signal file")->required();
  bench->add_option("--events", ecg_in.events, "events file")->required();
  bench->add_option("--meta", ecg_in.meta, "metadata file")->required();
  bench->add_option("--configs-limit", configs_limit, "evaluate only the first N configurations");
  bench->add_option("--folds", folds, "cross-validation folds");

  auto* traind = app.add_subcommand("train-detector", "train the drowsiness classifier");
  traind->add_option("--ecg", ecg_in.signal, "signal file")->required();
  traind->add_option("--events", ecg_in.events, "events file")->required();
  traind->add_option("--meta", ecg_in.meta, "metadata file")->required();

  std::string variant_flag;
  int episodes_flag = 0;
  auto* traina = app.add_subcommand("train-agent", "train a braking agent");
  traina->add_option("--variant", variant_flag, "dqn | double | dueling | dddqn");
  traina->add_option("--episodes", episodes_flag, "training episodes");

  std::string checkpoint;
  int scenarios_flag = 0;
  auto* evalp = app.add_subcommand("eval-paired",
                                   "greedy evaluation over paired drowsy/alert scenarios");
  evalp->add_option("--checkpoint", checkpoint, "checkpoint or train-agent run directory")
      ->required();
  evalp->add_option("--episodes", scenarios_flag, "number of paired scenarios");

  std::string report_run;
  auto* report = app.add_subcommand("report", "aggregate a run into plot-ready series");
  report->add_option("--run", report_run, "training or evaluation run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) return cmd_benchmark_capsules(g, ecg_in, configs_limit, folds);
    if (traind->parsed()) return cmd_train_detector(g, ecg_in);
    if (traina->parsed()) return cmd_train_agent(g, variant_flag, episodes_flag);
    if (evalp->parsed()) return cmd_eval_paired(g, checkpoint, scenarios_flag);
    if (report->parsed()) return cmd_report(g, report_run);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "numeric divergence: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
