#include "hpfold/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace hpfold {

namespace {

constexpr BenchmarkEntry kRegistry[] = {
    {"3d1", "(HP)2PH(HP)2(PH)2HP(PH)2", 20, -11},
    {"3d2", "H2P2(HP2)6H2", 24, -13},
    {"3d3", "P2HP2(H2P4)3H2", 25, -9},
    {"3d4", "P(P2H2)2P5H5(H2P2)2P2H(HP2)2", 36, -18},
    {"3d5", "P2H3PH3P3HPH2PH2P2HPH4PHP2H5PHPH2P2H2P", 46, -35},
    {"3d6", "P2H(P2H2)2P5H10P6(H2P2)2HP2H5", 48, -31},
    {"3d7", "H2(PH)3PH4PH(P3H)2P4(HP3)2HPH4(PH)3PH2", 50, -34},
    {"3d8", "PH(PH3)2P(PH2PH)2H(HP)3(H2P2H)2PHP4(H(P2H)2)2", 58, -44},
    {"3d9", "P(PH3)3H5P3H10PHP3H12P4H6PH2PH", 60, -55},
    {"A1", "PHPHPH3P2HPHP11H2P", 27, -9},
    {"A2", "PH2P10H2P2H2P2HP2HPH", 27, -10},
    {"A3", "H4P5HP4H3P9H", 27, -8},
    {"A4", "H3P2H4P3HPHP2H2P2HP3H2", 27, -15},
    {"A5", "H4P4HPH2P3H2P10", 27, -8},
    {"A6", "HP6HPH3P2H2P3HP4HPH", 27, -12},
    {"A7", "HP2HPH2P3HP5HPH2PHPHPH2", 27, -13},
    {"A8", "HP11HPHP8HPH2", 27, -4},
    {"A9", "P7H3P3HPH2P3HP2HP3", 27, -7},
    {"A10", "P5H2PHPHPHPHP2H2PH2PHP3", 27, -11},
    {"A11", "HP4H4P2HPHPH3PHP2H2P2H", 27, -16},
};

using A = Architecture;
constexpr auto none = std::nullopt;

const PublishedRun kPublished[] = {
    {"3d1", A::kLstmA, 3, 16, 200000, -11, 6324741},
    {"3d2", A::kLstmA, 3, 16, 220000, -13, 6324741},
    {"3d3", A::kLstmA, 3, 16, 220000, -9, 6324741},
    {"3d4", A::kLstmA, 3, 16, 250000, -18, 6324741},
    {"3d5", A::kLstmA, 5, 16, 500000, -33, 10527237},
    {"3d6", A::kLstmA, 5, 16, 500000, -30, 10527237},
    {"3d5", A::kLstmA, 5, 32, 750000, -33, 10527237},
    {"3d7", A::kLstmA, 5, 32, 750000, -32, 10527237},
    {"3d6", A::kLstmA, 5, 32, 750000, -30, 10527237},
    {"3d8", A::kLstmA, 5, 32, 750000, -40, 10527237},
    {"3d8", A::kLstmA, 6, 32, 750000, none, none},
    {"3d9", A::kLstmA, 5, 32, 750000, -51, none},
    {"3d1", A::kLstmOlh, 3, 16, 200000, -11, 5274117},
    {"3d2", A::kLstmOlh, 3, 16, 220000, -13, 5274117},
    {"3d3", A::kLstmOlh, 3, 16, 220000, -9, 5274117},
    {"3d4", A::kLstmOlh, 3, 16, 250000, -18, none},
    {"3d5", A::kLstmOlh, 5, 16, 500000, -35, none},
    {"3d6", A::kLstmOlh, 5, 16, 500000, none, none},
    {"3d7", A::kLstmOlh, 5, 32, 750000, none, none},
    {"3d8", A::kLstmOlh, 5, 32, 750000, none, none},
    {"3d9", A::kLstmOlh, 5, 32, 750000, none, none},
    {"3d1", A::kFfnn, 4, 16, 200000, -11, none},
    {"3d2", A::kFfnn, 4, 16, 220000, -13, none},
    {"3d3", A::kFfnn, 4, 16, 220000, -9, none},
    {"3d4", A::kFfnn, 4, 16, 250000, -18, none},
    {"3d5", A::kFfnn, 4, 16, 500000, -30, none},
    {"A1", A::kFfnn, 4, 16, 200000, -9, none},
    {"A2", A::kFfnn, 4, 16, 200000, -10, none},
    {"A3", A::kFfnn, 4, 16, 200000, -8, none},
    {"A4", A::kFfnn, 4, 16, 200000, -14, none},
    {"A5", A::kFfnn, 4, 16, 200000, -8, none},
    {"A6", A::kFfnn, 4, 16, 200000, -11, none},
    {"A7", A::kFfnn, 4, 16, 200000, -12, none},
    {"A8", A::kFfnn, 4, 16, 200000, -4, none},
    {"A9", A::kFfnn, 4, 16, 200000, -6, none},
    {"A10", A::kFfnn, 4, 16, 200000, -11, none},
    {"A1", A::kFfnnR, 4, 16, 200000, -9, 264445},
    {"A2", A::kFfnnR, 4, 16, 200000, -10, none},
    {"A3", A::kFfnnR, 4, 16, 200000, -8, none},
    {"A4", A::kFfnnR, 4, 16, 200000, -14, none},
    {"A5", A::kFfnnR, 4, 16, 200000, none, none},
    {"A6", A::kFfnnR, 4, 16, 200000, -11, none},
    {"A7", A::kFfnnR, 4, 16, 200000, -12, none},
    {"A8", A::kFfnnR, 4, 16, 200000, -4, none},
    {"A9", A::kFfnnR, 4, 16, 200000, -6, none},
    {"A10", A::kFfnnR, 4, 16, 200000, -11, none},
};

std::string run_dir_name(const ExperimentSpec& spec, std::uint64_t seed) {
  return spec.id + "_" + to_string(spec.network.architecture) + "_s" + std::to_string(seed);
}

SeedRun run_seed(const ExperimentSpec& spec, const HPSequence& seq, std::uint64_t seed,
                 const std::filesystem::path& out_dir) {
  SeedRun out;
  out.seed = seed;
  NetworkConfig net = spec.network;
  net.sequence_length = static_cast<int>(seq.size());
  net.seed = seed;
  TrainerConfig cfg = spec.trainer;
  cfg.seed = seed;

  std::filesystem::path dir;
  std::ofstream metrics;
  if (!out_dir.empty()) {
    dir = out_dir / run_dir_name(spec, seed);
    std::filesystem::create_directories(dir);
    Descriptor d;
    d.set("sequence", seq.to_string());
    d.set("sequence.id", spec.id);
    write_descriptor(net, d);
    write_descriptor(cfg, d);
    std::ofstream(dir / "config.resolved") << d.to_string();
    out.metrics_path = dir / "metrics.jsonl";
    metrics.open(out.metrics_path);
  }

  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(seq, net, cfg);
  trainer.run(
      [&](const EpisodeMetrics& m) {
        if (metrics) metrics << to_json_line(m) << '\n';
      },
      dir);
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  out.report = trainer.report();

  if (!dir.empty()) {
    out.checkpoint_path = dir / ("checkpoint_" + std::to_string(trainer.episode()) + ".hpqn");
    save_checkpoint(out.checkpoint_path, trainer.checkpoint());
    if (out.report.best) std::ofstream(dir / "best.conf") << format_conformation(*out.report.best);
  }
  return out;
}

}  // namespace

HPSequence BenchmarkEntry::sequence() const { return parse_hp_notation(notation, std::string(id)); }

UnknownBenchmarkError::UnknownBenchmarkError(std::string_view id)
    : std::invalid_argument("unknown benchmark id '" + std::string(id) + "'") {}

std::span<const BenchmarkEntry> registry() { return kRegistry; }

const BenchmarkEntry* find_benchmark(std::string_view id) {
  for (const auto& e : kRegistry)
    if (e.id == id) return &e;
  return nullptr;
}

const BenchmarkEntry& benchmark(std::string_view id) {
  const auto* e = find_benchmark(id);
  if (e == nullptr) throw UnknownBenchmarkError(id);
  return *e;
}

std::vector<const BenchmarkEntry*> suite(std::string_view name) {
  if (name != "3d" && name != "A" && name != "all")
    throw std::invalid_argument("unknown suite '" + std::string(name) + "' (expected 3d, A or all)");
  std::vector<const BenchmarkEntry*> out;
  for (const auto& e : kRegistry)
    if (name == "all" || e.id.starts_with(name)) out.push_back(&e);
  return out;
}

std::span<const PublishedRun> published_runs() { return kPublished; }

std::string to_string(Preset p) { return p == Preset::kPaper ? "paper" : "desk"; }

Preset preset_from_string(std::string_view name) {
  if (name == "desk") return Preset::kDesk;
  if (name == "paper") return Preset::kPaper;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

NetworkConfig preset_network(Preset p, Architecture a, int sequence_length, std::uint64_t seed) {
  return p == Preset::kPaper ? paper_preset(a, sequence_length, seed) : desk_preset(a, sequence_length, seed);
}

HPSequence ExperimentSpec::sequence() const {
  if (inline_sequence) return *inline_sequence;
  return benchmark(id).sequence();
}

ExperimentSpec make_experiment(std::string_view id, Architecture a, Preset p, long episodes,
                               std::vector<std::uint64_t> seeds) {
  ExperimentSpec spec;
  spec.id = std::string(id);
  // Sized from the parsed notation: 3d9's published notation and length disagree.
  const int n = static_cast<int>(benchmark(id).sequence().size());
  spec.network = preset_network(p, a, n);
  spec.trainer.episodes = episodes;
  spec.seeds = std::move(seeds);
  return spec;
}

unsigned worker_threads(std::size_t jobs, unsigned requested) {
  unsigned n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HPFOLD_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::clamp<std::size_t>(jobs, 1, n));
}

std::string summary_row(const RunRecord& record, const SeedRun& run) {
  std::ostringstream os;
  os << record.spec.id << ',' << to_string(record.spec.network.architecture) << ',' << run.seed << ',';
  if (run.report.best_energy != kNoEnergy) os << run.report.best_energy;
  os << ',';
  if (record.bkv) os << *record.bkv;
  os << ',';
  if (run.report.episodes_to_best >= 0) os << run.report.episodes_to_best;
  os << ',' << std::llround(run.wall_ms);
  return os.str();
}

void append_summary(const std::filesystem::path& path, const RunRecord& record) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  if (fresh) os << kSummaryHeader << '\n';
  for (const auto& run : record.runs)
    if (!run.error) os << summary_row(record, run) << '\n';
}

RunRecord run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  RunRecord record;
  record.spec = spec;
  if (!spec.inline_sequence) record.bkv = benchmark(spec.id).bkv;
  const HPSequence seq = spec.sequence();
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  record.runs.resize(spec.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.seeds.size(); i = next++) {
      try {
        record.runs[i] = run_seed(spec, seq, spec.seeds[i], out_dir);
        const int best = record.runs[i].report.best_energy;
        if (record.bkv && best != kNoEnergy && best < *record.bkv)
          record.runs[i].error = "best energy " + std::to_string(best) + " beats the best-known value " +
                                 std::to_string(*record.bkv);
      } catch (const std::exception& e) {
        record.runs[i].seed = spec.seeds[i];
        record.runs[i].error = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const unsigned n = worker_threads(spec.seeds.size(), spec.threads);
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  if (!out_dir.empty()) {
    static std::mutex summary_mutex;
    std::lock_guard lock(summary_mutex);
    append_summary(out_dir / "summary.csv", record);
  }
  for (const auto& run : record.runs)
    if (run.error) throw std::runtime_error("seed " + std::to_string(run.seed) + ": " + *run.error);
  return record;
}

MetricsFormatError::MetricsFormatError(const std::filesystem::path& path, std::size_t line, const std::string& what)
    : std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::vector<EpisodeMetrics> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<EpisodeMetrics> out;
  std::string line;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(parse_metrics_line(line));
    } catch (const std::exception& e) {
      throw MetricsFormatError(path, n, e.what());
    }
  }
  return out;
}

std::vector<std::filesystem::path> emit_plot_data(std::span<const PlotSource> sources,
                                                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  std::map<std::string, std::map<int, long>> histograms;
  for (const auto& src : sources) {
    const auto metrics = read_metrics(src.metrics);
    const auto path = out_dir / (src.label + "_curve.csv");
    std::ofstream os(path);
    os << "episode,best_energy\n";
    for (const auto& m : metrics) {
      os << m.episode << ',' << m.best_energy << '\n';
      ++histograms[src.architecture][m.energy];
    }
    written.push_back(path);
  }
  for (const auto& [arch, bins] : histograms) {
    const auto path = out_dir / (arch + "_histogram.csv");
    std::ofstream os(path);
    os << "bin,count\n";
    for (const auto& [bin, count] : bins) os << bin << ',' << count << '\n';
    written.push_back(path);
  }
  return written;
}

std::vector<Eigen::MatrixXd> export_attention(const Checkpoint& ckpt, const StateTensor& state) {
  auto net = load_network(ckpt);
  auto* lstm = dynamic_cast<LstmNetwork*>(net.get());
  if (lstm == nullptr || !lstm->has_attention())
    throw std::invalid_argument("attention export needs an lstm-a checkpoint, got " +
                                to_string(net->architecture()));
  return lstm->attention_weights(state);
}

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m) {
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << '\n';
  }
}

}  // namespace hpfold
