#include "hpfold/dqn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpfold {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  storage_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
    return;
  }
  storage_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= storage_.size()) throw std::out_of_range("replay index out of range");
  if (storage_.size() < capacity_) return storage_[i];
  return storage_[(head_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t k, Rng& rng) const {
  const std::size_t n = storage_.size();
  if (k > n) throw std::invalid_argument("cannot sample " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(j + 1));
    if (std::find(out.begin(), out.end(), t) == out.end())
      out.push_back(t);
    else
      out.push_back(j);
  }
  return out;
}

void ReplayBuffer::restore(std::vector<Transition> slots, std::size_t head) {
  if (slots.size() > capacity_) throw std::invalid_argument("replay restore exceeds capacity");
  if (head != 0 && (slots.size() < capacity_ || head >= capacity_))
    throw std::invalid_argument("replay restore head out of range");
  storage_ = std::move(slots);
  head_ = head;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  std::vector<const Transition*> out;
  for (auto i : sample_indices(k, rng)) out.push_back(&storage_[i]);
  return out;
}

double EpsilonSchedule::at(long episode) const {
  if (horizon <= 0 || episode >= horizon) return end;
  if (episode <= 0) return start;
  return start + (end - start) * static_cast<double>(episode) / static_cast<double>(horizon);
}

std::string to_string(LossKind k) { return k == LossKind::kMse ? "mse" : "smooth_l1"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "smooth_l1") return LossKind::kSmoothL1;
  if (s == "mse") return LossKind::kMse;
  throw std::invalid_argument("unknown loss '" + s + "' (expected smooth_l1 or mse)");
}

EpsilonSchedule TrainerConfig::schedule() const {
  return {eps_start, eps_end,
          static_cast<long>(std::llround(eps_decay_fraction * static_cast<double>(episodes)))};
}

void write_descriptor(const TrainerConfig& cfg, Descriptor& d) {
  d.set("trainer.gamma", cfg.gamma);
  d.set("trainer.batch_size", cfg.batch_size);
  d.set("trainer.target_sync", static_cast<long long>(cfg.target_sync));
  d.set("trainer.episodes", static_cast<long long>(cfg.episodes));
  d.set("trainer.buffer_capacity", static_cast<unsigned long long>(cfg.buffer_capacity));
  d.set("trainer.loss", to_string(cfg.loss));
  d.set("trainer.smooth_l1_beta", cfg.smooth_l1_beta);
  d.set("trainer.learning_rate", cfg.learning_rate);
  d.set("trainer.seed", static_cast<unsigned long long>(cfg.seed));
  d.set("trainer.eps_start", cfg.eps_start);
  d.set("trainer.eps_end", cfg.eps_end);
  d.set("trainer.eps_decay_fraction", cfg.eps_decay_fraction);
  d.set("trainer.trap_penalty", cfg.trap_penalty);
  d.set("trainer.masked_targets", cfg.masked_targets);
  d.set("trainer.checkpoint_every", static_cast<long long>(cfg.checkpoint_every));
  if (cfg.stop_at_energy) d.set("trainer.stop_at_energy", *cfg.stop_at_energy);
}

TrainerConfig read_trainer_config(const Descriptor& d) {
  TrainerConfig cfg;
  cfg.gamma = d.require_double("trainer.gamma");
  cfg.batch_size = static_cast<int>(d.require_int("trainer.batch_size"));
  cfg.target_sync = d.require_int("trainer.target_sync");
  cfg.episodes = d.require_int("trainer.episodes");
  cfg.buffer_capacity = static_cast<std::size_t>(d.require_int("trainer.buffer_capacity"));
  cfg.loss = loss_kind_from_string(d.require("trainer.loss"));
  cfg.smooth_l1_beta = d.require_double("trainer.smooth_l1_beta");
  cfg.learning_rate = d.require_double("trainer.learning_rate");
  cfg.seed = std::stoull(d.require("trainer.seed"));
  cfg.eps_start = d.require_double("trainer.eps_start");
  cfg.eps_end = d.require_double("trainer.eps_end");
  cfg.eps_decay_fraction = d.require_double("trainer.eps_decay_fraction");
  cfg.trap_penalty = d.require_double("trainer.trap_penalty");
  cfg.masked_targets = d.require_bool("trainer.masked_targets");
  cfg.checkpoint_every = d.require_int("trainer.checkpoint_every");
  if (d.get("trainer.stop_at_energy"))
    cfg.stop_at_energy = static_cast<int>(d.require_int("trainer.stop_at_energy"));
  return cfg;
}

namespace {

template <typename QFn>
Action epsilon_greedy(ActionSet legal, double eps, Rng& rng, QFn&& q_of) {
  if (legal.empty()) throw std::logic_error("select_action: no legal action");
  if (rng.uniform() < eps) {
    const auto moves = legal.to_vector();
    return moves[static_cast<std::size_t>(rng.uniform_int(moves.size()))];
  }
  const QValues q = q_of();
  std::optional<Action> best;
  for (Action a : kAllActions) {
    if (!legal.contains(a)) continue;
    if (!best || q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(*best)]) best = a;
  }
  return *best;
}

}  // namespace

Action select_action(const QValues& q, ActionSet legal, double eps, Rng& rng) {
  return epsilon_greedy(legal, eps, rng, [&] { return q; });
}

std::vector<double> compute_targets(std::span<const Transition* const> batch, QNetwork& target,
                                    double gamma, bool masked) {
  if (batch.empty()) throw std::invalid_argument("compute_targets: empty batch");
  std::vector<double> y(batch.size());
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i]->reward;
    if (!batch[i]->terminal) open.push_back(i);
  }
  if (open.empty()) return y;

  const Eigen::Index width = static_cast<Eigen::Index>(batch[open[0]]->next_state.flat().size());
  Eigen::MatrixXd next(static_cast<Eigen::Index>(open.size()), width);
  for (std::size_t k = 0; k < open.size(); ++k) {
    auto row = next.row(static_cast<Eigen::Index>(k));
    batch[open[k]]->next_state.write_row(row);
  }
  const Eigen::MatrixXd q = target.q_values(next);
  for (std::size_t k = 0; k < open.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    double best = -INFINITY;
    for (Action a : kAllActions) {
      if (masked && !batch[open[k]]->next_legal.contains(a)) continue;
      best = std::max(best, q(r, static_cast<Eigen::Index>(a)));
    }
    if (best == -INFINITY) best = 0.0;
    y[open[k]] += gamma * best;
  }
  return y;
}

double train_step(QNetwork& main, QNetwork& target, std::span<const Transition* const> batch,
                  const TrainerConfig& cfg, ad::AdamState& adam) {
  const std::vector<double> y = compute_targets(batch, target, cfg.gamma, cfg.masked_targets);

  const Eigen::Index width = static_cast<Eigen::Index>(batch[0]->state.flat().size());
  Eigen::MatrixXd states(static_cast<Eigen::Index>(batch.size()), width);
  Eigen::MatrixXd targets(static_cast<Eigen::Index>(batch.size()), 1);
  std::vector<ad::Index> taken(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = states.row(static_cast<Eigen::Index>(i));
    batch[i]->state.write_row(row);
    targets(static_cast<Eigen::Index>(i), 0) = y[i];
    taken[i] = static_cast<ad::Index>(batch[i]->action);
  }

  std::vector<ad::Tensor*> params = main.parameters();
  for (auto* p : params) p->clear_grad();

  ad::Tape tape;
  ad::Var q = main.forward(tape, states);
  ad::Var pred = ad::pick(q, taken);
  ad::Var goal = tape.constant(targets);
  ad::Var loss = cfg.loss == LossKind::kMse ? ad::mse(pred, goal)
                                            : ad::smooth_l1(pred, goal, cfg.smooth_l1_beta);
  const double value = loss.item();
  tape.backward(loss);

  // Parameters the graph never reached (e.g. W_hh when N = 1) get zero grads.
  for (auto* p : params)
    if (!p->has_grad()) p->zero_grad();
  adam.lr = cfg.learning_rate;
  ad::adam_step(params, adam);
  return value;
}

void sync_target(const QNetwork& main, QNetwork& target) { target.clone_weights_from(main); }

EpisodeResult run_episode(const HPSequence& seq, QNetwork& net, double eps, Rng& rng,
                          const RewardConfig& rewards,
                          const std::function<void(const Transition&)>& on_step) {
  EpisodeResult out{FoldOutcome{Conformation(seq)}, {}};
  Conformation c(seq);
  StateTensor s = encode_state(c);
  ActionSet legal = c.complete() ? ActionSet{} : legal_actions(c);
  if (legal.empty()) {
    const int e = energy(c);
    out.outcome = FoldOutcome{c, e, -e, c.complete() ? TerminalKind::Completed : TerminalKind::Trapped};
    return out;
  }
  while (true) {
    const Action a = epsilon_greedy(legal, eps, rng, [&] { return net.q_values(s); });
    StepResult r = step(c, a, rewards);
    Transition t;
    t.state = std::move(s);
    t.action = a;
    t.reward = r.reward;
    t.next_state = encode_state(r.next);
    t.terminal = r.terminal();
    if (!t.terminal) t.next_legal = legal_actions(r.next);
    if (on_step) on_step(t);
    legal = t.next_legal;
    s = t.next_state;
    out.transitions.push_back(std::move(t));
    if (r.terminal()) {
      out.outcome = std::move(*r.outcome);
      return out;
    }
    c = std::move(r.next);
  }
}

std::string to_json_line(const EpisodeMetrics& m) {
  nlohmann::ordered_json j;
  j["episode"] = m.episode;
  j["epsilon"] = m.epsilon;
  j["energy"] = m.energy;
  j["best_energy"] = m.best_energy;
  j["mean_loss"] = m.mean_loss;
  j["steps"] = m.steps;
  j["trapped"] = m.trapped;
  return j.dump();
}

EpisodeMetrics parse_metrics_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  EpisodeMetrics m;
  m.episode = j.at("episode").get<long>();
  m.epsilon = j.at("epsilon").get<double>();
  m.energy = j.at("energy").get<int>();
  m.best_energy = j.at("best_energy").get<int>();
  m.mean_loss = j.at("mean_loss").get<double>();
  m.steps = j.at("steps").get<int>();
  m.trapped = j.at("trapped").get<bool>();
  return m;
}

namespace {

constexpr std::uint64_t kTrainerStream = 0x9E3779B97F4A7C15ULL;

std::string actions_string(const std::vector<Action>& actions) {
  std::string s;
  for (Action a : actions) s += to_char(a);
  return s;
}

}  // namespace

Trainer::Trainer(HPSequence sequence, NetworkConfig net_cfg, TrainerConfig cfg)
    : sequence_(std::move(sequence)),
      cfg_(cfg),
      buffer_(cfg.buffer_capacity),
      rng_(cfg.seed ^ kTrainerStream) {
  if (net_cfg.sequence_length != static_cast<int>(sequence_.size()))
    throw std::invalid_argument("network sequence_length " + std::to_string(net_cfg.sequence_length) +
                                " does not match sequence length " + std::to_string(sequence_.size()));
  if (cfg_.batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (cfg_.target_sync <= 0) throw std::invalid_argument("target_sync must be positive");
  if (cfg_.gamma < 0.0 || cfg_.gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  main_ = make_network(net_cfg);
  target_ = main_->clone();
  adam_.lr = cfg_.learning_rate;
}

bool Trainer::finished() const {
  if (episode_ >= cfg_.episodes) return true;
  return cfg_.stop_at_energy && report_.best_energy <= *cfg_.stop_at_energy;
}

void Trainer::run(const MetricsSink& sink, const std::filesystem::path& checkpoint_dir) {
  run_episodes(cfg_.episodes - episode_, sink, checkpoint_dir);
}

void Trainer::run_episodes(long count, const MetricsSink& sink,
                           const std::filesystem::path& checkpoint_dir) {
  for (long k = 0; k < count && !finished(); ++k) {
    run_one(sink);
    if (cfg_.checkpoint_every > 0 && !checkpoint_dir.empty() && episode_ % cfg_.checkpoint_every == 0)
      save_checkpoint(checkpoint_dir / ("checkpoint_" + std::to_string(episode_) + ".hpqn"), checkpoint());
  }
}

void Trainer::run_one(const MetricsSink& sink) {
  const double eps = cfg_.schedule().at(episode_);
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);
  double loss_sum = 0.0;
  long losses = 0;
  auto learn = [&](const Transition& t) {
    buffer_.push(t);
    if (buffer_.size() < batch) return;
    const auto sample = buffer_.sample(batch, rng_);
    loss_sum += train_step(*main_, *target_, sample, cfg_, adam_);
    ++losses;
    if (++report_.gradient_steps % cfg_.target_sync == 0) sync_target(*main_, *target_);
  };
  EpisodeResult ep = run_episode(sequence_, *main_, eps, rng_, RewardConfig{cfg_.trap_penalty}, learn);

  const FoldOutcome& o = ep.outcome;
  if (o.kind == TerminalKind::Completed && o.energy < report_.best_energy) {
    report_.best_energy = o.energy;
    report_.best = o.conformation;
    report_.episodes_to_best = episode_ + 1;
  }
  EpisodeMetrics m;
  m.episode = episode_;
  m.epsilon = eps;
  m.energy = o.energy;
  m.best_energy = report_.best_energy == kNoEnergy ? 0 : report_.best_energy;
  m.mean_loss = losses > 0 ? loss_sum / static_cast<double>(losses) : 0.0;
  m.steps = static_cast<int>(ep.transitions.size());
  m.trapped = o.kind == TerminalKind::Trapped;
  ++episode_;
  report_.episodes_run = episode_;
  if (sink) sink(m);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  main_->save(ckpt);
  target_->save(ckpt, "target.");
  Descriptor& d = ckpt.descriptor;
  write_descriptor(cfg_, d);
  d.set("sequence", sequence_.to_string());
  d.set("sequence.id", sequence_.id());
  d.set("state.episode", static_cast<long long>(episode_));
  d.set("state.gradient_steps", static_cast<long long>(report_.gradient_steps));
  d.set("state.best_energy", report_.best_energy);
  d.set("state.episodes_to_best", static_cast<long long>(report_.episodes_to_best));
  d.set("state.best_actions", report_.best ? actions_string(report_.best->actions()) : std::string());
  d.set("state.rng", rng_.serialize());
  d.set("adam.step", static_cast<long long>(adam_.step_count));
  d.set("adam.moments", static_cast<unsigned long long>(adam_.first_moment.size()));
  for (std::size_t i = 0; i < adam_.first_moment.size(); ++i) {
    ckpt.add("adam.m." + std::to_string(i), adam_.first_moment[i]);
    ckpt.add("adam.v." + std::to_string(i), adam_.second_moment[i]);
  }

  // Replay storage in slot order plus the ring head, so sampling resumes exactly.
  const auto slots = buffer_.slots();
  const auto n = static_cast<Eigen::Index>(slots.size());
  const auto width = static_cast<Eigen::Index>(sequence_.size() * StateTensor::kFeatures);
  d.set("replay.head", static_cast<unsigned long long>(buffer_.head()));
  d.set("replay.size", static_cast<unsigned long long>(slots.size()));
  Eigen::MatrixXd states(n, width), next(n, width), meta(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = slots[static_cast<std::size_t>(i)];
    auto srow = states.row(i);
    t.state.write_row(srow);
    auto nrow = next.row(i);
    t.next_state.write_row(nrow);
    meta(i, 0) = static_cast<double>(t.action);
    meta(i, 1) = t.reward;
    meta(i, 2) = t.terminal ? 1.0 : 0.0;
    meta(i, 3) = t.next_legal.bits();
  }
  ckpt.add("replay.states", states);
  ckpt.add("replay.next_states", next);
  ckpt.add("replay.meta", meta);
  return ckpt;
}

namespace {

StateTensor state_from_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  StateTensor s(static_cast<std::size_t>(m.cols()) / StateTensor::kFeatures);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double v = m(row, j);
    if (v != 0.0 && v != 1.0) throw CheckpointError("replay state entry is not one-hot");
    s.set(static_cast<std::size_t>(j) / StateTensor::kFeatures,
          static_cast<std::size_t>(j) % StateTensor::kFeatures, static_cast<std::uint8_t>(v));
  }
  return s;
}

}  // namespace

Trainer Trainer::resume(const Checkpoint& ckpt) {
  const Descriptor& d = ckpt.descriptor;
  HPSequence seq = parse_hp_notation(d.require("sequence"), d.get("sequence.id").value_or(""));
  Trainer t(seq, read_network_config(d), read_trainer_config(d));
  t.main_->load(ckpt);
  t.target_->load(ckpt, "target.");

  t.episode_ = d.require_int("state.episode");
  t.report_.episodes_run = t.episode_;
  t.report_.gradient_steps = d.require_int("state.gradient_steps");
  t.report_.best_energy = static_cast<int>(d.require_int("state.best_energy"));
  t.report_.episodes_to_best = d.require_int("state.episodes_to_best");
  const std::string best = d.require("state.best_actions");
  if (t.report_.best_energy != kNoEnergy) {
    std::vector<Action> actions;
    for (char ch : best) {
      auto a = action_from_char(ch);
      if (!a) throw CheckpointError("bad action '" + std::string(1, ch) + "' in state.best_actions");
      actions.push_back(*a);
    }
    t.report_.best = Conformation::from_actions(seq, actions);
  }
  t.rng_.deserialize(d.require("state.rng"));

  t.adam_.step_count = d.require_int("adam.step");
  const auto moments = d.require_int("adam.moments");
  for (long long i = 0; i < moments; ++i) {
    t.adam_.first_moment.push_back(ckpt.require("adam.m." + std::to_string(i)).to_matrix());
    t.adam_.second_moment.push_back(ckpt.require("adam.v." + std::to_string(i)).to_matrix());
  }

  const auto size = static_cast<Eigen::Index>(d.require_int("replay.size"));
  std::vector<Transition> slots;
  if (size > 0) {
    const Eigen::MatrixXd states = ckpt.require("replay.states").to_matrix();
    const Eigen::MatrixXd next = ckpt.require("replay.next_states").to_matrix();
    const Eigen::MatrixXd meta = ckpt.require("replay.meta").to_matrix();
    if (states.rows() != size || next.rows() != size || meta.rows() != size || meta.cols() != 4)
      throw CheckpointError("replay records do not match replay.size");
    for (Eigen::Index i = 0; i < size; ++i) {
      Transition tr;
      tr.state = state_from_row(states, i);
      tr.next_state = state_from_row(next, i);
      tr.action = static_cast<Action>(static_cast<int>(meta(i, 0)));
      tr.reward = meta(i, 1);
      tr.terminal = meta(i, 2) != 0.0;
      tr.next_legal = ActionSet::from_bits(static_cast<std::uint8_t>(meta(i, 3)));
      slots.push_back(std::move(tr));
    }
  }
  t.buffer_.restore(std::move(slots), static_cast<std::size_t>(d.require_int("replay.head")));
  return t;
}

TrainReport train(const HPSequence& seq, const NetworkConfig& net_cfg, const TrainerConfig& cfg,
                  const MetricsSink& sink, const std::filesystem::path& checkpoint_dir) {
  Trainer trainer(seq, net_cfg, cfg);
  trainer.run(sink, checkpoint_dir);
  return trainer.report();
}

}  // namespace hpfold
