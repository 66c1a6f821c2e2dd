// SPDX-License-Identifier: Apache-2.0
// siamban: train, track, evaluate and ablate the tracker from the shell.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "siamban/checkpoint.hpp"
#include "siamban/config.hpp"
#include "siamban/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace siamban;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::vector<std::string> set;
  long long seed = -1;
  std::string out;
};

RunConfig resolve(const Common& c) {
  json patch = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("cannot open config '" + c.config + "'");
    try {
      patch = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
  }
  apply_overrides(patch, c.set);
  if (c.seed >= 0) patch["seed"] = static_cast<std::uint64_t>(c.seed);
  if (!c.out.empty()) patch["paths"]["output_dir"] = c.out;
  RunConfig cfg = run_config_from_json(patch);
  // Pin the environment default so the echoed config reproduces the run.
  cfg.paths.data_root = cfg.resolved_data_root().string();
  return cfg;
}

std::vector<SequenceRecord> training_set(const RunConfig& cfg, bool synthetic) {
  if (synthetic) {
    return make_synthetic_dataset(cfg.synthetic.train_sequences, cfg.synthetic.train_length, cfg.synthetic.spec,
                                  cfg.synthetic_seed(false), "train");
  }
  const fs::path root = cfg.resolved_data_root();
  if (root.empty()) throw ConfigError("paths.data_root: not set (use --synthetic, --set paths.data_root=DIR or SIAMBAN_DATA_ROOT)");
  auto set = load_sequence_set(root);
  if (set.empty()) throw ConfigError("paths.data_root: no sequences under '" + root.string() + "'");
  return set;
}

std::vector<SequenceRecord> evaluation_set(const RunConfig& cfg, bool synthetic, const std::string& sequences) {
  if (synthetic) {
    return make_synthetic_dataset(cfg.synthetic.eval_sequences, cfg.synthetic.eval_length, cfg.synthetic.spec,
                                  cfg.synthetic_seed(true), "eval");
  }
  fs::path root = sequences;
  if (root.empty()) root = cfg.paths.eval_root;
  if (root.empty()) root = cfg.resolved_data_root();
  if (root.empty()) throw ConfigError("paths.eval_root: not set (use --synthetic or --sequences DIR)");
  return load_sequence_set(root);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

int cmd_train(const RunConfig& cfg, bool synthetic, const std::string& resume, bool quiet) {
  const auto data = training_set(cfg, synthetic);
  const fs::path out = cfg.paths.output_dir;
  fs::create_directories(out);
  write_json(out / "config.json", to_json(cfg));
  std::cout << to_json(cfg).dump(2) << std::endl;

  SiamBanModel model(cfg.seeded_model());
  const TrainConfig tc = cfg.seeded_train();
  std::ofstream log(out / "train_log.jsonl");
  const long total = tc.total_steps();
  const long every = std::max<long>(1, total / 20);
  auto on_step = [&](long step, double lr, const LossReport& r) {
    json line = to_json(r);
    line["step"] = step;
    line["lr"] = lr;
    log << line.dump() << "\n";
    if (!quiet && (step % every == 0 || step + 1 == total)) {
      std::fprintf(stderr, "step %ld/%ld lr %.6f loss %.4f (cls %.4f, reg %.4f)\n", step + 1, total, lr, r.total,
                   r.cls_loss, r.reg_loss);
    }
  };
  std::optional<fs::path> from;
  if (!resume.empty()) from = resume;
  const TrainReport report = train(data, tc, model, on_step, from);
  const double final_loss = report.steps.empty() ? 0.0 : report.steps.back().total;
  std::fprintf(stderr, "final loss %.4f after %zu steps in %.1f s; checkpoint %s\n", final_loss, report.steps.size(),
               report.seconds, report.final_checkpoint.string().c_str());
  return 0;
}

int cmd_track(const RunConfig& cfg, const std::string& checkpoint, const std::string& sequence,
              const std::string& init) {
  const SiamBanModel model = load_model(checkpoint);
  const SequenceRecord seq = load_sequence(sequence);
  if (seq.size() == 0) throw std::runtime_error("sequence '" + sequence + "' has no frames");
  const Box start = init.empty() ? seq.boxes.front() : parse_xywh(init);
  Tracker tracker(model, cfg.postprocess, cfg.crop);

  const fs::path out = cfg.paths.output_dir;
  fs::create_directories(out);
  std::ofstream boxes(out / "boxes.txt");
  json scores = json::array();
  const auto t0 = std::chrono::steady_clock::now();
  tracker.init(seq.frame(0), start);
  boxes << tracker.box().to_xywh_string() << "\n";
  scores.push_back(1.0);
  for (std::size_t k = 1; k < seq.size(); ++k) {
    boxes << tracker.track_frame(seq.frame(k)).to_xywh_string() << "\n";
    scores.push_back(tracker.last().score);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double fps = secs > 0 ? static_cast<double>(seq.size()) / secs : 0.0;
  write_json(out / "summary.json",
             {{"sequence", seq.name}, {"frames", seq.size()}, {"fps", fps}, {"scores", scores}});
  std::fprintf(stderr, "tracked %zu frames at %.1f fps; boxes in %s\n", seq.size(), fps,
               (out / "boxes.txt").string().c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, bool synthetic, const std::string& sequences) {
  const SiamBanModel model = load_model(checkpoint);
  const auto set = evaluation_set(cfg, synthetic, sequences);
  const BenchmarkResult result = run_benchmark(
      set, [&](const SequenceRecord&) { return std::make_unique<Tracker>(model, cfg.postprocess, cfg.crop); });
  write_benchmark(result, cfg.paths.output_dir);
  std::cout << json{{"auc", result.auc}, {"precision20", result.precision20}}.dump() << std::endl;
  return 0;
}

int cmd_ablate(const RunConfig& cfg, bool synthetic, const std::string& variants, const std::string& sequences) {
  std::vector<AssignmentVariant> list;
  std::stringstream ss(variants);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      list.push_back(parse_assignment_variant(item));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--variants: ") + e.what());
    }
  }
  if (list.empty()) throw ConfigError("--variants: empty list");
  const auto train_set = training_set(cfg, synthetic);
  const auto eval_set = evaluation_set(cfg, synthetic, sequences);
  TrainConfig tc = cfg.seeded_train();
  tc.checkpoint_dir = fs::path(cfg.paths.output_dir) / "ablation";
  const auto rows = run_ablation(cfg.seeded_model(), tc, cfg.postprocess, train_set, eval_set, list);
  const json table = to_json(rows);
  write_json(fs::path(cfg.paths.output_dir) / "ablation.json", table);
  std::cout << table.dump(2) << std::endl;
  return 0;
}

int cmd_synth(const RunConfig& cfg, int count, int length, const std::string& prefix) {
  const fs::path out = cfg.paths.output_dir;
  const auto set = make_synthetic_dataset(count, length, cfg.synthetic.spec, cfg.synthetic_seed(prefix == "eval"),
                                          prefix);
  for (const SequenceRecord& s : set) save_sequence(s, out / s.name);
  std::fprintf(stderr, "wrote %zu sequences to %s\n", set.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-free Siamese tracker: training, tracking and evaluation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--set", common.set, "Override a config field, e.g. train.batch=4")->take_all();
    sub->add_option("--seed", common.seed, "Root seed");
    sub->add_option("--out", common.out, "Output directory (paths.output_dir)");
  };

  bool synthetic = false, quiet = false;
  std::string resume, checkpoint, sequence, sequences, init, variants = "ellipse,circle,rectangle", prefix = "synth";
  long steps = 0;
  int count = 10, length = 100;

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd);
  train_cmd->add_flag("--synthetic", synthetic, "Train on generated sequences");
  train_cmd->add_option("--steps", steps, "Total optimization steps");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint written by train");
  train_cmd->add_flag("--quiet", quiet, "Only report the final loss");

  auto* track_cmd = app.add_subcommand("track", "Track one sequence");
  add_common(track_cmd);
  track_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  track_cmd->add_option("--sequence", sequence, "Sequence directory (frames/ + groundtruth.txt)")->required();
  track_cmd->add_option("--init", init, "Initial box x,y,w,h (default: first ground-truth line)");

  auto* eval_cmd = app.add_subcommand("eval", "One-pass evaluation over a sequence set");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--sequences", sequences, "Directory of sequence directories");
  eval_cmd->add_flag("--synthetic", synthetic, "Evaluate on generated sequences");

  auto* ablate_cmd = app.add_subcommand("ablate", "Compare label-assignment variants");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--variants", variants, "Comma-separated list of ellipse, circle, rectangle");
  ablate_cmd->add_flag("--synthetic", synthetic, "Train and evaluate on generated sequences");
  ablate_cmd->add_option("--sequences", sequences, "Evaluation sequence directory");
  ablate_cmd->add_option("--steps", steps, "Training steps per variant");

  auto* synth_cmd = app.add_subcommand("synth", "Write generated sequences to disk");
  add_common(synth_cmd);
  synth_cmd->add_option("--count", count, "Number of sequences")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--length", length, "Frames per sequence")->check(CLI::Range(2, 100000));
  synth_cmd->add_option("--prefix", prefix, "Sequence name prefix; 'eval' uses the evaluation seed stream");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (steps > 0) common.set.push_back("train.steps=" + std::to_string(steps));
    const RunConfig cfg = resolve(common);
    if (*train_cmd) return cmd_train(cfg, synthetic, resume, quiet);
    if (*track_cmd) return cmd_track(cfg, checkpoint, sequence, init);
    if (*eval_cmd) return cmd_eval(cfg, checkpoint, synthetic, sequences);
    if (*ablate_cmd) return cmd_ablate(cfg, synthetic, variants, sequences);
    if (*synth_cmd) return cmd_synth(cfg, count, length, prefix);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const PreconditionError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
