#pragma once

// Benchmark registry (the 3d and A sequence sets), experiment runner over
// seeds, plot-data emission from metrics logs and attention export.

#include "hpfold/dqn.hpp"
#include "hpfold/lattice.hpp"
#include "hpfold/networks.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpfold {

struct BenchmarkEntry {
  std::string_view id;
  std::string_view notation;
  int length;
  int bkv;

  HPSequence sequence() const;
};

class UnknownBenchmarkError : public std::invalid_argument {
 public:
  explicit UnknownBenchmarkError(std::string_view id);
};

std::span<const BenchmarkEntry> registry();
const BenchmarkEntry* find_benchmark(std::string_view id);
const BenchmarkEntry& benchmark(std::string_view id);  // throws UnknownBenchmarkError

// "3d", "A" or "all".
std::vector<const BenchmarkEntry*> suite(std::string_view name);

// One row of the published trial-run table. Cells marked "-" there are empty
// optionals here.
struct PublishedRun {
  std::string_view id;
  Architecture architecture;
  int layers;
  int batch_size;
  long episodes;
  std::optional<int> best_energy;
  std::optional<std::size_t> parameters;
};

std::span<const PublishedRun> published_runs();

enum class Preset { kDesk, kPaper };

std::string to_string(Preset p);
Preset preset_from_string(std::string_view name);

NetworkConfig preset_network(Preset p, Architecture a, int sequence_length, std::uint64_t seed = 0);

struct ExperimentSpec {
  std::string id;                    // registry id, or a label for an inline sequence
  std::optional<HPSequence> inline_sequence;
  NetworkConfig network;             // sequence_length and seed are filled per run
  TrainerConfig trainer;             // seed is filled per run
  std::vector<std::uint64_t> seeds;
  unsigned threads = 0;              // 0: HPFOLD_THREADS, else hardware concurrency

  HPSequence sequence() const;
};

ExperimentSpec make_experiment(std::string_view id, Architecture a, Preset p, long episodes,
                               std::vector<std::uint64_t> seeds);

struct SeedRun {
  std::uint64_t seed = 0;
  TrainReport report;
  double wall_ms = 0.0;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  std::optional<std::string> error;
};

struct RunRecord {
  ExperimentSpec spec;
  std::optional<int> bkv;
  std::vector<SeedRun> runs;  // in spec.seeds order
};

// Worker count for seed-parallel runs, capped by HPFOLD_THREADS when set.
unsigned worker_threads(std::size_t jobs, unsigned requested = 0);

inline constexpr std::string_view kSummaryHeader =
    "id,architecture,seed,best_energy,bkv,episodes_to_best,wall_ms";

std::string summary_row(const RunRecord& record, const SeedRun& run);
// Appends one row per seed, writing the header first when the file is new.
void append_summary(const std::filesystem::path& path, const RunRecord& record);

// Trains every seed (in parallel) under out_dir/<id>_<arch>_s<seed>/ and
// appends to out_dir/summary.csv when out_dir is set. Seeds that throw are
// kept in the record with `error` set; the first such error is rethrown after
// the summary is written.
RunRecord run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir = {});

class MetricsFormatError : public std::runtime_error {
 public:
  MetricsFormatError(const std::filesystem::path& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::vector<EpisodeMetrics> read_metrics(const std::filesystem::path& path);

struct PlotSource {
  std::string label;         // file stem for the curve CSV
  std::string architecture;  // histogram grouping key
  std::filesystem::path metrics;
};

// Writes <label>_curve.csv (episode,best_energy) per source and
// <architecture>_histogram.csv (bin,count) over final episode energies.
// Returns the files written.
std::vector<std::filesystem::path> emit_plot_data(std::span<const PlotSource> sources,
                                                  const std::filesystem::path& out_dir);

// Per-head N x N attention weights of the LSTM-A network in `ckpt`.
std::vector<Eigen::MatrixXd> export_attention(const Checkpoint& ckpt, const StateTensor& state);
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m);

}  // namespace hpfold
