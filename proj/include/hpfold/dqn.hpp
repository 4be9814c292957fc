#pragma once

// Deep Q-learning with experience replay and a periodically synced target
// network. The Trainer interleaves acting and learning: every environment
// step stores a transition and, once the buffer holds a full minibatch, takes
// one gradient step; the target network is refreshed every `target_sync`
// gradient steps.

#include "hpfold/ad/adam.hpp"
#include "hpfold/checkpoint.hpp"
#include "hpfold/lattice.hpp"
#include "hpfold/networks.hpp"
#include "hpfold/rng.hpp"

#include <climits>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hpfold {

struct Transition {
  StateTensor state;
  Action action = Action::F;
  double reward = 0.0;
  StateTensor next_state;
  bool terminal = false;
  ActionSet next_legal;  // legal moves from next_state; empty when terminal
};

// Fixed-capacity ring; once full, each push evicts the oldest transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }

  // i = 0 is the oldest stored transition.
  const Transition& operator[](std::size_t i) const;

  // k distinct positions, uniform over all k-subsets (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const;
  std::vector<const Transition*> sample(std::size_t k, Rng& rng) const;

  void clear() {
    storage_.clear();
    head_ = 0;
  }

  // Raw ring slots and write head; sample_indices() indexes these slots.
  std::span<const Transition> slots() const { return storage_; }
  std::size_t head() const { return head_; }
  void restore(std::vector<Transition> slots, std::size_t head);

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // slot the next push overwrites once full
};

// Linear decay from start to end over `horizon` episodes, then constant.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  long horizon = 0;

  double at(long episode) const;
};

enum class LossKind { kSmoothL1, kMse };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainerConfig {
  double gamma = 0.98;
  int batch_size = 16;
  long target_sync = 1000;  // gradient steps between target refreshes
  long episodes = 0;
  std::size_t buffer_capacity = 100000;
  LossKind loss = LossKind::kSmoothL1;
  double smooth_l1_beta = 1.0;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.5;  // share of episodes spent decaying
  double trap_penalty = 0.0;
  bool masked_targets = false;  // restrict max_a' to legal moves of s'
  long checkpoint_every = 0;    // episodes; 0 disables periodic checkpoints
  std::optional<int> stop_at_energy;

  EpsilonSchedule schedule() const;
};

void write_descriptor(const TrainerConfig& cfg, Descriptor& d);
TrainerConfig read_trainer_config(const Descriptor& d);

// Epsilon-greedy over the legal moves; greedy ties resolve in F<L<R<U<D order.
Action select_action(const QValues& q, ActionSet legal, double eps, Rng& rng);

// y = r for terminal transitions, else r + gamma * max_a' Q_target(s', a').
// Only non-terminal next states are ever evaluated by the target network.
std::vector<double> compute_targets(std::span<const Transition* const> batch, QNetwork& target,
                                    double gamma, bool masked = false);

// One Adam step on the main network toward compute_targets(); returns the loss.
double train_step(QNetwork& main, QNetwork& target, std::span<const Transition* const> batch,
                  const TrainerConfig& cfg, ad::AdamState& adam);

void sync_target(const QNetwork& main, QNetwork& target);

struct EpisodeResult {
  FoldOutcome outcome;
  std::vector<Transition> transitions;
};

// Rolls one walk from the anchor. `on_step` sees each transition as soon as it
// happens, before the next action is chosen.
EpisodeResult run_episode(const HPSequence& seq, QNetwork& net, double eps, Rng& rng,
                          const RewardConfig& rewards = {},
                          const std::function<void(const Transition&)>& on_step = {});

inline constexpr int kNoEnergy = INT_MAX;

struct EpisodeMetrics {
  long episode = 0;
  double epsilon = 0.0;
  int energy = 0;
  // Best completed-fold energy so far; 0 until the first completed fold.
  int best_energy = 0;
  double mean_loss = 0.0;
  int steps = 0;
  bool trapped = false;
};

std::string to_json_line(const EpisodeMetrics& m);
EpisodeMetrics parse_metrics_line(const std::string& line);

using MetricsSink = std::function<void(const EpisodeMetrics&)>;

struct TrainReport {
  int best_energy = kNoEnergy;  // kNoEnergy when no fold completed
  std::optional<Conformation> best;
  long episodes_to_best = -1;
  long episodes_run = 0;
  long gradient_steps = 0;
};

class Trainer {
 public:
  Trainer(HPSequence sequence, NetworkConfig net_cfg, TrainerConfig cfg);

  // Runs until cfg.episodes episodes are done in total (or the stop energy
  // is reached). Periodic checkpoints land in `checkpoint_dir` when set.
  void run(const MetricsSink& sink = {}, const std::filesystem::path& checkpoint_dir = {});
  // Runs at most `count` more episodes.
  void run_episodes(long count, const MetricsSink& sink = {},
                    const std::filesystem::path& checkpoint_dir = {});

  bool finished() const;
  long episode() const { return episode_; }
  const TrainReport& report() const { return report_; }
  const HPSequence& sequence() const { return sequence_; }
  const TrainerConfig& config() const { return cfg_; }
  QNetwork& main_network() { return *main_; }
  QNetwork& target_network() { return *target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const ad::AdamState& optimizer() const { return adam_; }

  // Full state for exact resume: both networks, Adam moments, replay
  // contents, RNG state and counters.
  Checkpoint checkpoint() const;
  static Trainer resume(const Checkpoint& ckpt);

 private:
  void run_one(const MetricsSink& sink);

  HPSequence sequence_;
  TrainerConfig cfg_;
  std::unique_ptr<QNetwork> main_;
  std::unique_ptr<QNetwork> target_;
  ReplayBuffer buffer_;
  ad::AdamState adam_;
  Rng rng_;
  long episode_ = 0;
  TrainReport report_;
};

TrainReport train(const HPSequence& seq, const NetworkConfig& net_cfg, const TrainerConfig& cfg,
                  const MetricsSink& sink = {}, const std::filesystem::path& checkpoint_dir = {});

}  // namespace hpfold
