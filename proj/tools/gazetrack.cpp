// gazetrack: simulate, bench, datagen, train, eval, infer.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gazetrack/gazetrack.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gazetrack;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--out", c.out, "output path (file or directory, per command)");
  sub->add_option("--format", c.format, "report format on stdout")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
}

// Effective option values of a subcommand, echoed into its reports.
json config_echo(const CLI::App* sub) {
  json echo = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string name = opt->get_lnames().front();
    if (opt->get_type_size() == 0) {
      echo[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      echo[name] = results.size() == 1 ? json(results.front()) : json(results);
    } else if (!opt->get_default_str().empty()) {
      echo[name] = opt->get_default_str();
    }
  }
  return echo;
}

void add_generator_options(CLI::App* sub, GeneratorConfig& g) {
  sub->add_option("--angular-noise-deg", g.angular_noise_deg, "tracker error shared by both eyes")->capture_default_str();
  sub->add_option("--vergence-noise-deg", g.vergence_noise_deg, "independent per-eye error")->capture_default_str();
  sub->add_option("--plane-distance", g.plane_distance, "virtual plane distance, m")->capture_default_str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

void print_report(const json& report, const std::string& format) {
  if (format == "json") {
    std::cout << report.dump(2) << '\n';
    return;
  }
  // Flat key,value listing of the top-level scalars.
  std::cout << "key,value\n";
  for (const auto& [k, v] : report.items())
    if (!v.is_structured()) std::cout << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
}

std::vector<LabeledSample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path);
  return read_dataset_csv(in, path);
}

json metrics_to_json(const Metrics& m) {
  json confusion = json::array();
  for (const auto& row : m.confusion) confusion.push_back(row);
  return {{"accuracy", m.accuracy}, {"mean_loss", m.mean_loss}, {"count", m.count}, {"confusion", confusion}};
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common common;
  std::string policy = "realtime";
  std::size_t widgets = 12;
  double duration = 1.0;
  double rate = 60.0;
  std::string motion = "drift";
  std::string gaze = "seek";
  bool check = false;
  std::string weights;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App* sub) {
  ScenarioSpec spec;
  spec.policy = parse_policy(a.policy);
  spec.widgets = a.widgets;
  spec.duration_s = a.duration;
  spec.rate_hz = a.rate;
  spec.motion = parse_motion(a.motion);
  spec.gaze = parse_gaze_path(a.gaze);
  spec.seed = a.common.seed;
  const Scenario scenario = simulate(spec);

  const fs::path dir = a.common.out.empty() ? fs::path("simulate_out") : fs::path(a.common.out);
  fs::create_directories(dir);
  const fs::path events_path = dir / "events.jsonl";
  const fs::path expected_path = dir / "expected.jsonl";
  {
    auto out = open_out(events_path);
    write_events_jsonl(out, scenario.events);
  }
  {
    auto out = open_out(expected_path);
    for (const auto& x : scenario.expected) out << expected_to_json(x).dump() << '\n';
  }

  std::size_t gaze_events = 0;
  for (const auto& e : scenario.events) gaze_events += e.is_gaze();
  json report = {{"events_file", events_path.string()},
                 {"expected_file", expected_path.string()},
                 {"policy", policy_name(spec.policy)},
                 {"widgets", spec.widgets},
                 {"events", scenario.events.size()},
                 {"gaze_events", gaze_events},
                 {"widget_events", scenario.events.size() - gaze_events},
                 {"config", config_echo(sub)}};

  int status = 0;
  if (a.check) {
    const DepthModelParams weights =
        a.weights.empty() ? DepthModelParams::initialize(a.common.seed) : load_weights(a.weights);
    PipelineConfig cfg;
    cfg.policy = scenario.policy;
    cfg.ablate_intra = !weights.has_intra;
    const RunResult result = replay_from_file(events_path.string(), weights, cfg);
    std::ifstream in(expected_path);
    const auto expected = read_expected_jsonl(in, expected_path.string());
    std::size_t mismatches = expected.size() == result.records.size() ? 0 : 1;
    for (std::size_t i = 0; i < std::min(expected.size(), result.records.size()); ++i)
      mismatches += !(as_expected(result.records[i]) == expected[i]);
    report["check"] = {{"records", result.records.size()},
                       {"expected", expected.size()},
                       {"mismatches", mismatches},
                       {"match", mismatches == 0},
                       {"summary", summary_to_json(result.summary)}};
    status = mismatches == 0 ? 0 : 1;
  }
  print_report(report, a.common.format);
  return status;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  Common common;
  std::vector<std::string> policies = {"static", "event", "realtime"};
  std::vector<std::size_t> widgets;
  double duration = 0.0;
  double rate = 60.0;
  std::string motion = "drift";
  std::string gaze = "seek";
  std::size_t warmup = 100;
  std::size_t repeats = 1;
  std::string weights;
};

int cmd_bench(const BenchArgs& a, const CLI::App* sub) {
  BenchSpec spec;
  spec.policies.clear();
  for (const auto& p : a.policies) spec.policies.push_back(parse_policy(p));
  if (!a.widgets.empty()) spec.widget_counts = a.widgets;
  spec.duration_s = a.duration;
  spec.rate_hz = a.rate;
  spec.motion = parse_motion(a.motion);
  spec.gaze = parse_gaze_path(a.gaze);
  spec.seed = a.common.seed;
  spec.warmup_events = a.warmup;
  spec.repeats = a.repeats;
  const DepthModelParams weights =
      a.weights.empty() ? DepthModelParams::initialize(a.common.seed) : load_weights(a.weights);

  BenchReport report = run_bench(spec, weights);
  report.config = config_echo(sub);
  const json j = bench_to_json(report);
  if (!a.common.out.empty()) {
    const fs::path base(a.common.out);
    auto csv = open_out(fs::path(base).replace_extension(".csv"));
    write_bench_csv(csv, report);
    auto js = open_out(fs::path(base).replace_extension(".json"));
    js << j.dump(2) << '\n';
  }
  if (a.common.format == "csv")
    write_bench_csv(std::cout, report);
  else
    std::cout << j.dump(2) << '\n';
  return 0;
}

// ----------------------------------------------------------------- datagen

struct DatagenArgs {
  Common common;
  std::size_t n = 11000;
  GeneratorConfig generator;
};

int cmd_datagen(const DatagenArgs& a, const CLI::App* sub) {
  const auto samples = generate_dataset(a.n, a.common.seed, a.generator);
  const fs::path path = a.common.out.empty() ? fs::path("dataset.csv") : fs::path(a.common.out);
  {
    auto out = open_out(path);
    write_dataset_csv(out, samples);
  }
  const auto counts = class_counts(samples);
  print_report({{"dataset", path.string()},
                {"samples", samples.size()},
                {"class_counts", counts},
                {"config", config_echo(sub)}},
               a.common.format);
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data;
  std::size_t n = 11000;
  std::size_t trials = 5;
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t embed_dim = kDefaultEmbedDim;
  bool ablate_intra = false;
  GeneratorConfig generator;
};

struct TrialSet {
  std::vector<double> accuracies;
  TrainResult first;
};

TrialSet run_trials(std::span<const LabeledSample> samples, const TrainArgs& a, bool ablate) {
  TrialSet set;
  for (std::size_t k = 0; k < a.trials; ++k) {
    TrainConfig cfg;
    cfg.seed = a.common.seed + k;
    cfg.split_seed = a.common.seed;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.embed_dim = a.embed_dim;
    cfg.ablate_intra = ablate;
    TrainResult r = train(samples, {}, cfg);
    std::cerr << (ablate ? "ablated" : "full") << " trial " << k + 1 << "/" << a.trials << ": test accuracy "
              << r.test.accuracy << " (best epoch " << r.best_epoch << ")\n";
    set.accuracies.push_back(r.test.accuracy);
    if (k == 0) set.first = std::move(r);
  }
  return set;
}

json trial_summary(const TrialSet& set) {
  const MeanStd ms = mean_std(set.accuracies);
  return {{"accuracies", set.accuracies},
          {"mean", ms.mean},
          {"std", ms.stddev},
          {"best_epoch_first_trial", set.first.best_epoch},
          {"test_first_trial", metrics_to_json(set.first.test)}};
}

int cmd_train(const TrainArgs& a, const CLI::App* sub) {
  if (a.trials == 0) throw InvalidArgument("--trials must be >= 1");
  const auto samples = a.data.empty() ? generate_dataset(a.n, a.common.seed, a.generator) : load_dataset(a.data);
  const fs::path dir = a.common.out.empty() ? fs::path("train_out") : fs::path(a.common.out);
  fs::create_directories(dir);

  const TrialSet full = run_trials(samples, a, false);
  save_weights(full.first.params, (dir / "weights.bin").string());
  {
    auto out = open_out(dir / "history.csv");
    write_history_csv(out, full.first.history);
  }
  json summary = {{"samples", samples.size()},
                  {"trials", a.trials},
                  {"full", trial_summary(full)},
                  {"published_reference", {{"full_accuracy", 0.971}, {"ablated_accuracy", 0.65}}},
                  {"config", config_echo(sub)}};
  if (a.ablate_intra) {
    const TrialSet ablated = run_trials(samples, a, true);
    save_weights(ablated.first.params, (dir / "weights_ablated.bin").string());
    auto out = open_out(dir / "history_ablated.csv");
    write_history_csv(out, ablated.first.history);
    summary["ablated"] = trial_summary(ablated);
    summary["ablation_gap"] = summary["full"]["mean"].get<double>() - summary["ablated"]["mean"].get<double>();
  }
  {
    auto out = open_out(dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  print_report(summary, a.common.format);
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string weights;
  std::string data;
};

int cmd_eval(const EvalArgs& a, const CLI::App* sub) {
  const DepthModelParams params = load_weights(a.weights);
  const auto samples = load_dataset(a.data);
  const Metrics m = evaluate(params, samples, !params.has_intra);
  json report = metrics_to_json(m);
  report["ablate_intra"] = !params.has_intra;
  report["config"] = config_echo(sub);
  if (!a.common.out.empty()) {
    auto out = open_out(a.common.out);
    out << report.dump(2) << '\n';
  }
  print_report(report, a.common.format);
  return 0;
}

// ------------------------------------------------------------------- infer

struct InferArgs {
  Common common;
  std::string weights;
  std::string data;
  std::string events;
  std::string policy = "realtime";
  double rate = 60.0;
  std::size_t min_samples = 1000;
  bool summary_only = false;
};

int cmd_infer(const InferArgs& a, const CLI::App* sub) {
  if (a.data.empty() == a.events.empty()) throw InvalidArgument("infer needs exactly one of --data or --events");
  const auto total_start = Clock::now();
  const auto load_start = Clock::now();
  const DepthModelParams params = load_weights(a.weights);
  const double load_s = seconds_since(load_start);
  const bool ablate = !params.has_intra;

  json report = {{"platform", "host"}, {"weights", a.weights}, {"model_load_time_s", load_s}};
  if (!a.data.empty()) {
    const auto samples = load_dataset(a.data);
    if (samples.empty()) throw InvalidArgument("dataset is empty");
    const std::size_t n = std::max(a.min_samples, samples.size());
    std::size_t correct = 0;
    const auto start = Clock::now();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = samples[i % samples.size()];
      const auto probs = predict(params, s.features, ablate);
      correct += i < samples.size() && argmax(probs) == static_cast<int>(s.label);
    }
    const double infer_s = seconds_since(start);
    report["samples"] = n;
    report["inference_time_s"] = infer_s / static_cast<double>(n);
    report["accuracy"] = static_cast<double>(correct) / static_cast<double>(samples.size());
  } else {
    PipelineConfig cfg;
    cfg.policy = {parse_policy(a.policy), a.rate};
    cfg.ablate_intra = ablate;
    std::ofstream file;
    std::ostream* records = &std::cout;
    if (!a.common.out.empty()) {
      file = open_out(a.common.out);
      records = &file;
    }
    const RunResult result = replay_from_file(a.events, params, cfg, [&](const OutputRecord& r) {
      if (!a.summary_only) *records << record_to_json(r).dump() << '\n';
    });
    *records << json{{"summary", summary_to_json(result.summary)}}.dump() << '\n';
    report["samples"] = result.summary.gaze_events;
    report["inference_time_s"] = result.summary.mean_latency_us * 1e-6;
  }
  report["total_time_s"] = seconds_since(total_start);
  report["budget_s"] = 1.0 / 60.0;
  report["config"] = config_echo(sub);
  if (!a.events.empty() && a.common.out.empty()) {
    std::cerr << report.dump(2) << '\n';
  } else {
    print_report(report, a.common.format);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze target tracking and depth-level estimation"};
  app.set_config("--config", "", "TOML-style key = value file; [section] names a subcommand");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a scenario event file plus expected targets");
  add_common(simulate_cmd, sim.common);
  simulate_cmd->add_option("--policy", sim.policy, "static | event | realtime")->capture_default_str();
  simulate_cmd->add_option("--widgets", sim.widgets, "widget count")->capture_default_str();
  simulate_cmd->add_option("--duration", sim.duration, "seconds")->capture_default_str()->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--rate", sim.rate, "gaze rate, Hz")->capture_default_str()->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--motion", sim.motion, "drift | resize | churn")->capture_default_str();
  simulate_cmd->add_option("--gaze", sim.gaze, "sweep | seek")->capture_default_str();
  simulate_cmd->add_flag("--check", sim.check, "replay the event file and compare with the expected file");
  simulate_cmd->add_option("--weights", sim.weights, "weights for --check (default: seeded init)")
      ->check(CLI::ExistingFile);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "latency sweep over widget counts");
  add_common(bench_cmd, bench.common);
  bench_cmd->add_option("--policies", bench.policies, "scenarios to run")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--widgets", bench.widgets, "widget counts (default 1..12,25,50,100,200)")->delimiter(',');
  bench_cmd->add_option("--duration", bench.duration, "seconds per cell (default 30, realtime 1)")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--rate", bench.rate, "gaze rate, Hz")->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--motion", bench.motion, "drift | resize | churn")->capture_default_str();
  bench_cmd->add_option("--gaze", bench.gaze, "sweep | seek")->capture_default_str();
  bench_cmd->add_option("--warmup", bench.warmup, "warm-up events per cell")->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "measured runs per cell")->capture_default_str();
  bench_cmd->add_option("--weights", bench.weights, "weight file (default: seeded init)")->check(CLI::ExistingFile);

  DatagenArgs gen;
  auto* datagen_cmd = app.add_subcommand("datagen", "write a synthetic labeled dataset as CSV");
  add_common(datagen_cmd, gen.common);
  datagen_cmd->add_option("-n,--samples", gen.n, "sample count")->capture_default_str();
  add_generator_options(datagen_cmd, gen.generator);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the depth model over several seeds");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "dataset CSV (default: generate -n samples)")->check(CLI::ExistingFile);
  train_cmd->add_option("-n,--samples", tr.n, "generated sample count")->capture_default_str();
  train_cmd->add_option("--trials", tr.trials, "seeds to train")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs, "epochs")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.batch, "batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr, "learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--embed-dim", tr.embed_dim, "embedding width")->capture_default_str();
  train_cmd->add_flag("--ablate-intra", tr.ablate_intra, "also train without intra-stream attention");
  add_generator_options(train_cmd, tr.generator);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy, loss and confusion matrix on a dataset");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--weights", ev.weights, "weight file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "dataset CSV")->required()->check(CLI::ExistingFile);

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "timed inference over a dataset or an event stream");
  add_common(infer_cmd, inf.common);
  infer_cmd->add_option("--weights", inf.weights, "weight file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--data", inf.data, "dataset CSV")->check(CLI::ExistingFile);
  infer_cmd->add_option("--events", inf.events, "event JSONL")->check(CLI::ExistingFile);
  infer_cmd->add_option("--policy", inf.policy, "update policy for --events")->capture_default_str();
  infer_cmd->add_option("--rate", inf.rate, "realtime tick rate, Hz")->capture_default_str()->check(CLI::PositiveNumber);
  infer_cmd->add_option("--min-samples", inf.min_samples, "timed forward passes for --data")->capture_default_str();
  infer_cmd->add_flag("--summary-only", inf.summary_only, "suppress per-event records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*simulate_cmd) return cmd_simulate(sim, simulate_cmd);
    if (*bench_cmd) return cmd_bench(bench, bench_cmd);
    if (*datagen_cmd) return cmd_datagen(gen, datagen_cmd);
    if (*train_cmd) return cmd_train(tr, train_cmd);
    if (*eval_cmd) return cmd_eval(ev, eval_cmd);
    if (*infer_cmd) return cmd_infer(inf, infer_cmd);
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
