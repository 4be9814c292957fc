#include "hpfold/cli.hpp"

#include "hpfold/bench.hpp"
#include "hpfold/checkpoint.hpp"
#include "hpfold/dqn.hpp"
#include "hpfold/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace hpfold::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SequenceArgs {
  std::string notation;
  std::string bench;
};

void add_sequence_options(CLI::App& app, SequenceArgs& a) {
  auto* seq = app.add_option("--sequence", a.notation, "HP notation, e.g. (HP)2PH2");
  auto* bench = app.add_option("--bench", a.bench, "benchmark id (3d1..3d9, A1..A11)");
  seq->excludes(bench);
  bench->excludes(seq);
}

std::optional<HPSequence> resolve_sequence(const SequenceArgs& a) {
  if (!a.bench.empty()) return benchmark(a.bench).sequence();
  if (!a.notation.empty()) return parse_hp_notation(a.notation);
  return std::nullopt;
}

std::string sequence_label(const SequenceArgs& a) { return a.bench.empty() ? "custom" : a.bench; }

Conformation replay(const HPSequence& seq, const std::string& actions) {
  std::vector<Action> acts;
  for (char c : actions) {
    const auto a = action_from_char(c);
    if (!a) throw UsageError(std::string("unknown action '") + c + "' (expected F, L, R, U or D)");
    acts.push_back(*a);
  }
  return Conformation::from_actions(seq, acts);
}

// The overlay itself happens in expand_config(); this only documents the flag.
void add_config_option(CLI::App& cmd) {
  static std::string ignored;
  cmd.add_option("--config", ignored, "key=value file mirroring flag names; command-line flags win");
}

// Splices the --config file of the subcommand in as flags placed before the
// user's own flags. With TakeLast the later command-line value wins.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end() || std::next(it) == args.end() || args.empty()) return args;
  const std::string path = *std::next(it);
  std::ifstream is(path);
  if (!is) throw CLI::FileError::Missing(path);
  std::vector<std::string> from_file;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(is)) {
    const std::string value = item.inputs.empty() ? "" : item.inputs.front();
    if (value.empty() || item.name == "config") continue;
    if (value == "false") continue;
    from_file.push_back("--" + item.name);
    if (value != "true") from_file.push_back(value);
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  SequenceArgs seq;
  std::string arch = "ffnn-r";
  std::string preset = "desk";
  long episodes = 1000;
  std::uint64_t seed = 0;
  std::string out;
  TrainerConfig trainer;
  std::string loss = "smooth_l1";
  std::optional<int> stop_at;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "train a Q-network on one sequence");
  add_config_option(*cmd);
  add_sequence_options(*cmd, a.seq);
  cmd->add_option("--arch", a.arch, "ffnn, ffnn-r, lstm-olh or lstm-a")->capture_default_str();
  cmd->add_option("--preset", a.preset, "desk or paper")->capture_default_str();
  cmd->add_option("--episodes", a.episodes)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "output directory (default runs/<id>_<arch>_s<seed>)");
  auto& t = a.trainer;
  cmd->add_option("--gamma", t.gamma)->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size)->capture_default_str();
  cmd->add_option("--target-sync", t.target_sync, "gradient steps between target refreshes")->capture_default_str();
  cmd->add_option("--buffer", t.buffer_capacity, "replay capacity")->capture_default_str();
  cmd->add_option("--loss", a.loss, "smooth_l1 or mse")->capture_default_str();
  cmd->add_option("--lr", t.learning_rate)->capture_default_str();
  cmd->add_option("--eps-start", t.eps_start)->capture_default_str();
  cmd->add_option("--eps-end", t.eps_end)->capture_default_str();
  cmd->add_option("--eps-decay", t.eps_decay_fraction, "share of episodes spent decaying")->capture_default_str();
  cmd->add_option("--trap-penalty", t.trap_penalty)->capture_default_str();
  cmd->add_flag("--masked-targets", t.masked_targets, "max over legal moves of s' only");
  cmd->add_option("--checkpoint-every", t.checkpoint_every, "episodes; 0 keeps only the final checkpoint")
      ->capture_default_str();
  cmd->add_option("--stop-at", a.stop_at, "stop once this energy is reached");
}

int cmd_train(CLI::App& cmd, TrainArgs& a, std::ostream& out) {
  const auto seq = resolve_sequence(a.seq);
  if (!seq) throw UsageError("train needs --sequence or --bench");
  const Architecture arch = architecture_from_string(a.arch);
  const Preset preset = preset_from_string(a.preset);
  const std::string label = sequence_label(a.seq);
  const fs::path dir = a.out.empty() ? fs::path("runs") / (label + "_" + a.arch + "_s" + std::to_string(a.seed))
                                     : fs::path(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.resolved", cmd.config_to_str(true, false));

  TrainerConfig cfg = a.trainer;
  cfg.episodes = a.episodes;
  cfg.seed = a.seed;
  cfg.loss = loss_kind_from_string(a.loss);
  cfg.stop_at_energy = a.stop_at;
  const NetworkConfig net = preset_network(preset, arch, static_cast<int>(seq->size()), a.seed);

  std::ofstream metrics(dir / "metrics.jsonl");
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(*seq, net, cfg);
  trainer.run([&](const EpisodeMetrics& m) { metrics << to_json_line(m) << '\n'; }, dir);
  metrics.close();

  RunRecord record;
  record.spec.id = label;
  record.spec.network = net;
  if (!a.seq.bench.empty()) record.bkv = benchmark(a.seq.bench).bkv;
  SeedRun run;
  run.seed = a.seed;
  run.report = trainer.report();
  run.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  run.checkpoint_path = dir / ("checkpoint_" + std::to_string(trainer.episode()) + ".hpqn");
  save_checkpoint(run.checkpoint_path, trainer.checkpoint());
  if (run.report.best) write_text(dir / "best.conf", format_conformation(*run.report.best));
  record.runs.push_back(run);
  fs::remove(dir / "summary.csv");
  append_summary(dir / "summary.csv", record);

  out << label << ' ' << a.arch << " seed " << a.seed << ": ";
  if (run.report.best_energy == kNoEnergy)
    out << "no completed fold";
  else
    out << "best energy " << run.report.best_energy << " at episode " << run.report.episodes_to_best;
  if (record.bkv) out << " (bkv " << *record.bkv << ")";
  out << ", " << trainer.episode() << " episodes, " << run.report.gradient_steps << " gradient steps, "
      << std::fixed << std::setprecision(1) << run.wall_ms / 1000.0 << " s\n"
      << "output: " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string checkpoint;
  SequenceArgs seq;
  std::string export_path;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "greedy rollout of a trained checkpoint");
  add_config_option(*cmd);
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  add_sequence_options(*cmd, a.seq);
  cmd->add_option("--export", a.export_path, "write the conformation here");
}

int cmd_evaluate(EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  auto net = load_network(ckpt);
  std::optional<HPSequence> seq = resolve_sequence(a.seq);
  if (!seq) {
    const auto stored = ckpt.descriptor.get("sequence");
    if (!stored) throw UsageError("checkpoint carries no sequence; pass --sequence or --bench");
    seq = parse_hp_notation(*stored, ckpt.descriptor.get("sequence.id").value_or(""));
  }
  if (static_cast<int>(seq->size()) != net->sequence_length())
    throw UsageError("checkpoint network expects " + std::to_string(net->sequence_length()) +
                     " residues, sequence has " + std::to_string(seq->size()));

  Rng rng(0);
  const EpisodeResult r = run_episode(*seq, *net, 0.0, rng);
  const Conformation& c = r.outcome.conformation;
  if (r.outcome.kind == TerminalKind::Completed) {
    const int verified = verify_conformation(*seq, c.positions());
    if (verified != r.outcome.energy)
      throw std::runtime_error("verification energy " + std::to_string(verified) + " differs from rollout energy " +
                               std::to_string(r.outcome.energy));
    out << "energy " << r.outcome.energy << " (verified)\n";
  } else {
    out << "trapped after " << c.placed() << " of " << seq->size() << " residues, energy " << r.outcome.energy
        << '\n';
  }
  if (const auto best = ckpt.descriptor.get("state.best_energy"); best && std::stoll(*best) != kNoEnergy)
    out << "logged best " << *best << '\n';
  if (!seq->id().empty())
    if (const auto* e = find_benchmark(seq->id())) out << "bkv " << e->bkv << '\n';
  if (!a.export_path.empty()) write_text(a.export_path, format_conformation(c));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// enumerate

struct EnumerateArgs {
  SequenceArgs seq;
  bool no_symmetry = false;
  bool no_bound = false;
  std::size_t max_n = EnumOptions{}.max_n;
  unsigned threads = 1;
  std::string export_path;
};

void add_enumerate(CLI::App& app, EnumerateArgs& a) {
  auto* cmd = app.add_subcommand("enumerate", "exact minimum energy by exhaustive search");
  add_config_option(*cmd);
  add_sequence_options(*cmd, a.seq);
  cmd->add_flag("--no-symmetry", a.no_symmetry, "enumerate every symmetric copy");
  cmd->add_flag("--no-bound", a.no_bound, "disable bound pruning");
  cmd->add_option("--max-n", a.max_n, "length guard")->capture_default_str();
  cmd->add_option("--threads", a.threads)->capture_default_str();
  cmd->add_option("--export", a.export_path, "write the best conformation here");
}

int cmd_enumerate(EnumerateArgs& a, std::ostream& out) {
  // The oracle also takes sequences shorter than the environment minimum.
  std::vector<Residue> residues;
  if (!a.seq.bench.empty()) {
    const HPSequence seq = benchmark(a.seq.bench).sequence();
    residues.assign(seq.residues().begin(), seq.residues().end());
  } else if (!a.seq.notation.empty()) {
    residues = expand_hp_notation(a.seq.notation);
  } else {
    throw UsageError("enumerate needs --sequence or --bench");
  }
  EnumOptions opts;
  opts.symmetry_pruning = !a.no_symmetry;
  opts.bound_pruning = !a.no_bound;
  opts.max_n = a.max_n;
  opts.threads = std::max(1u, a.threads);
  const EnumerationResult r = enumerate_min_energy(residues, opts);

  std::string text;
  for (Residue x : residues) text += to_char(x);
  nlohmann::ordered_json j;
  j["sequence"] = text;
  j["n"] = residues.size();
  j["min_energy"] = r.min_energy;
  j["optimal_count"] = r.optimal_count;
  j["walks_explored"] = r.walks_explored;
  j["elapsed_ms"] = std::chrono::duration<double, std::milli>(r.elapsed).count();
  out << j.dump() << '\n';
  if (!a.export_path.empty() && r.best) write_text(a.export_path, format_conformation(*r.best));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string suite = "all";
  std::string arch = "ffnn-r";
  std::string preset = "desk";
  int seeds = 1;
  long episodes = 1000;
  unsigned threads = 0;
  std::string out = "bench_out";
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand("bench", "train every sequence of a suite over several seeds");
  add_config_option(*cmd);
  cmd->add_option("--suite", a.suite, "3d, A or all")->capture_default_str();
  cmd->add_option("--arch", a.arch)->capture_default_str();
  cmd->add_option("--preset", a.preset)->capture_default_str();
  cmd->add_option("--seeds", a.seeds, "seeds 1..k")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--episodes", a.episodes)->capture_default_str();
  cmd->add_option("--threads", a.threads, "seed workers; 0 uses HPFOLD_THREADS or all cores")->capture_default_str();
  cmd->add_option("--out", a.out)->capture_default_str();
}

int cmd_bench(CLI::App& cmd, BenchArgs& a, std::ostream& out) {
  const auto entries = suite(a.suite);
  const Architecture arch = architecture_from_string(a.arch);
  const Preset preset = preset_from_string(a.preset);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  fs::remove(dir / "summary.csv");
  write_text(dir / "config.resolved", cmd.config_to_str(true, false));

  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= a.seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  std::vector<PlotSource> plots;
  for (const auto* e : entries) {
    ExperimentSpec spec = make_experiment(e->id, arch, preset, a.episodes, seeds);
    spec.threads = a.threads;
    const RunRecord rec = run_experiment(spec, dir);
    for (const auto& run : rec.runs) {
      out << summary_row(rec, run) << '\n';
      plots.push_back({run.metrics_path.parent_path().filename().string(), a.arch, run.metrics_path});
    }
  }
  emit_plot_data(plots, dir / "plots");
  out << "summary: " << (dir / "summary.csv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// export

struct ExportArgs {
  std::string checkpoint;
  SequenceArgs seq;
  std::string actions;
  std::string out = ".";
};

void add_export(CLI::App& app, ExportArgs& a) {
  auto* cmd = app.add_subcommand("export", "write per-head attention matrices of an lstm-a checkpoint as CSV");
  add_config_option(*cmd);
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  add_sequence_options(*cmd, a.seq);
  cmd->add_option("--actions", a.actions, "moves after the anchor, e.g. FLLU; default the initial state");
  cmd->add_option("--out", a.out)->capture_default_str();
}

int cmd_export(ExportArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  std::optional<HPSequence> seq = resolve_sequence(a.seq);
  if (!seq) {
    const auto stored = ckpt.descriptor.get("sequence");
    if (!stored) throw UsageError("checkpoint carries no sequence; pass --sequence or --bench");
    seq = parse_hp_notation(*stored);
  }
  const auto heads = export_attention(ckpt, encode_state(replay(*seq, a.actions)));
  fs::create_directories(a.out);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const fs::path p = fs::path(a.out) / ("attention_head_" + std::to_string(h) + ".csv");
    std::ofstream os(p);
    write_matrix_csv(os, heads[h]);
    out << p.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("HP lattice protein folding with deep Q-learning", "hpfold");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  TrainArgs train_args;
  EvaluateArgs evaluate_args;
  EnumerateArgs enumerate_args;
  BenchArgs bench_args;
  ExportArgs export_args;
  add_train(app, train_args);
  add_evaluate(app, evaluate_args);
  add_enumerate(app, enumerate_args);
  add_bench(app, bench_args);
  add_export(app, export_args);

  try {
    const std::vector<std::string> expanded = expand_config(args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "train") return cmd_train(*cmd, train_args, out);
    if (name == "evaluate") return cmd_evaluate(evaluate_args, out);
    if (name == "enumerate") return cmd_enumerate(enumerate_args, out);
    if (name == "bench") return cmd_bench(*cmd, bench_args, out);
    return cmd_export(export_args, out);
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::length_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace hpfold::cli
