#include "hpfold/oracle.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <thread>

namespace hpfold {

EnumerationLimitError::EnumerationLimitError(std::size_t n, std::size_t max_n)
    : std::length_error("sequence length " + std::to_string(n) + " exceeds the enumeration limit " +
                        std::to_string(max_n) + "; raise max_n only if you can afford ~4.7^n walks") {}

std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::kLength: return "length";
    case ConstraintKind::kBondLength: return "bond-length";
    case ConstraintKind::kSelfAvoidance: return "self-avoidance";
  }
  return "?";
}

ConformationViolation::ConformationViolation(std::size_t index, ConstraintKind kind)
    : std::invalid_argument(to_string(kind) + " violation at residue " + std::to_string(index)),
      index_(index),
      kind_(kind) {}

namespace {

constexpr std::array<std::array<int, 3>, 6> kUnit{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

int unit_index(const Point& p) {
  for (int i = 0; i < 6; ++i)
    if (p.x() == kUnit[i][0] && p.y() == kUnit[i][1] && p.z() == kUnit[i][2]) return i;
  throw std::logic_error("not a unit vector");
}

Point unit_point(int i) { return {kUnit[i][0], kUnit[i][1], kUnit[i][2]}; }

// Turtle frames as (heading, up) pairs of unit indices, id = 6 * h + u.
struct FrameTables {
  std::array<std::array<int, kNumActions>, 36> dir{};
  std::array<std::array<int, kNumActions>, 36> next{};
  int start = 0;

  FrameTables() {
    for (int h = 0; h < 6; ++h) {
      for (int u = 0; u < 6; ++u) {
        if (h / 2 == u / 2) continue;
        TurtleFrame f{unit_point(h), unit_point(u)};
        for (Action a : kAllActions) {
          const Point d = f.direction(a);
          const TurtleFrame g = f.transported(d);
          dir[6 * h + u][static_cast<int>(a)] = unit_index(d);
          next[6 * h + u][static_cast<int>(a)] = 6 * unit_index(g.heading) + unit_index(g.up);
        }
      }
    }
    const TurtleFrame f0;
    start = 6 * unit_index(f0.heading) + unit_index(f0.up);
  }
};

const FrameTables& tables() {
  static const FrameTables t;
  return t;
}

struct Prefix {
  std::vector<Action> actions;
};

struct SubResult {
  int best = -1;
  std::uint64_t count = 0;
  std::uint64_t explored = 0;
  std::vector<Action> best_actions;
};

class Search {
 public:
  Search(std::span<const Residue> residues, const EnumOptions& opts)
      : n_(static_cast<int>(residues.size())), span_(2 * n_ + 1), opts_(opts) {
    is_h_.reserve(residues.size());
    for (Residue r : residues) is_h_.push_back(r == Residue::H);
    rem_h_.assign(residues.size() + 1, 0);
    for (int k = n_ - 1; k >= 0; --k) rem_h_[k] = rem_h_[k + 1] + (is_h_[k] ? 1 : 0);
    grid_.assign(static_cast<std::size_t>(span_) * span_ * span_, -1);
    for (int d = 0; d < 6; ++d)
      step_[d] = (kUnit[d][0] * span_ + kUnit[d][1]) * span_ + kUnit[d][2];
  }

  // Places the anchor plus `prefix`; false if the prefix collides.
  bool seed(std::span<const Action> prefix) {
    std::fill(grid_.begin(), grid_.end(), -1);
    cells_.clear();
    actions_.clear();
    frame_ = tables().start;
    turned_ = lifted_ = false;
    contacts_ = 0;
    const int origin = (n_ * span_ + n_) * span_ + n_;
    place(origin, 0);
    if (n_ > 1) place(origin + step_[2], 1);
    for (Action a : prefix) {
      const int cell = cells_.back() + step_[tables().dir[frame_][static_cast<int>(a)]];
      if (grid_[cell] >= 0) return false;
      apply(a, cell);
    }
    return true;
  }

  void collect_prefixes(int depth, std::vector<Prefix>& out) {
    if (static_cast<int>(actions_.size()) == depth || static_cast<int>(cells_.size()) == n_) {
      out.push_back({actions_});
      return;
    }
    for_each_move([&](Action a, int cell) {
      const auto saved = save();
      apply(a, cell);
      collect_prefixes(depth, out);
      restore(saved);
    });
  }

  void run(SubResult& r) {
    result_ = &r;
    dfs();
  }

 private:
  struct Saved {
    int frame, contacts;
    bool turned, lifted;
  };

  Saved save() const { return {frame_, contacts_, turned_, lifted_}; }

  void restore(const Saved& s) {
    grid_[cells_.back()] = -1;
    cells_.pop_back();
    actions_.pop_back();
    frame_ = s.frame;
    contacts_ = s.contacts;
    turned_ = s.turned;
    lifted_ = s.lifted;
  }

  void place(int cell, int k) {
    if (is_h_[k]) {
      for (int d = 0; d < 6; ++d) {
        const int j = grid_[cell + step_[d]];
        if (j >= 0 && j < k - 1 && is_h_[j]) ++contacts_;
      }
    }
    grid_[cell] = k;
    cells_.push_back(cell);
  }

  void apply(Action a, int cell) {
    place(cell, static_cast<int>(cells_.size()));
    actions_.push_back(a);
    frame_ = tables().next[frame_][static_cast<int>(a)];
    if (a != Action::F) turned_ = true;
    if (a == Action::U || a == Action::D) lifted_ = true;
  }

  template <typename Fn>
  void for_each_move(Fn&& fn) {
    for (Action a : kAllActions) {
      if (opts_.symmetry_pruning) {
        if (!turned_ && a != Action::F && a != Action::L) continue;
        if (!lifted_ && a == Action::D) continue;
      }
      const int cell = cells_.back() + step_[tables().dir[frame_][static_cast<int>(a)]];
      if (grid_[cell] >= 0) continue;
      fn(a, cell);
    }
  }

  void dfs() {
    const int k = static_cast<int>(cells_.size());
    if (k == n_) {
      ++result_->explored;
      if (contacts_ > result_->best) {
        result_->best = contacts_;
        result_->count = 1;
        result_->best_actions = actions_;
      } else if (contacts_ == result_->best) {
        ++result_->count;
      }
      return;
    }
    if (opts_.bound_pruning && contacts_ + 4 * rem_h_[k] + 2 < result_->best) return;
    for_each_move([&](Action a, int cell) {
      const auto saved = save();
      apply(a, cell);
      dfs();
      restore(saved);
    });
  }

  int n_;
  int span_;
  EnumOptions opts_;
  std::vector<bool> is_h_;
  std::vector<int> rem_h_;
  std::vector<int> grid_;
  std::array<int, 6> step_{};
  std::vector<int> cells_;
  std::vector<Action> actions_;
  int frame_ = 0;
  int contacts_ = 0;
  bool turned_ = false;
  bool lifted_ = false;
  SubResult* result_ = nullptr;
};

std::vector<Point> trace(std::span<const Action> actions, std::size_t n) {
  std::vector<Point> pts;
  pts.push_back(Point::Zero());
  if (n > 1) pts.push_back(Point(0, 1, 0));
  TurtleFrame f;
  for (Action a : actions) {
    const Point d = f.direction(a);
    pts.push_back(pts.back() + d);
    f = f.transported(d);
  }
  return pts;
}

}  // namespace

EnumerationResult enumerate_min_energy(std::span<const Residue> residues, const EnumOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (residues.empty()) throw std::invalid_argument("cannot enumerate an empty sequence");
  if (residues.size() > opts.max_n) throw EnumerationLimitError(residues.size(), opts.max_n);

  const int n = static_cast<int>(residues.size());
  std::vector<Prefix> prefixes;
  {
    Search s(residues, opts);
    s.seed({});
    s.collect_prefixes(std::clamp(opts.split_depth, 0, std::max(0, n - 2)), prefixes);
  }

  std::vector<SubResult> parts(prefixes.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    Search s(residues, opts);
    for (std::size_t i = next++; i < prefixes.size(); i = next++) {
      s.seed(prefixes[i].actions);
      s.run(parts[i]);
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(prefixes.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  EnumerationResult out;
  int best = -1;
  for (const auto& p : parts) {
    out.walks_explored += p.explored;
    if (p.count == 0) continue;
    if (p.best > best) {
      best = p.best;
      out.optimal_count = p.count;
      out.best_actions = p.best_actions;
    } else if (p.best == best) {
      out.optimal_count += p.count;
    }
  }
  out.min_energy = best > 0 ? -best : 0;
  out.best_positions = trace(out.best_actions, residues.size());
  if (residues.size() >= HPSequence::kMinLength) {
    HPSequence seq(std::vector<Residue>(residues.begin(), residues.end()));
    out.best = Conformation::from_actions(seq, out.best_actions);
  }
  out.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);
  return out;
}

EnumerationResult enumerate_min_energy(const HPSequence& seq, const EnumOptions& opts) {
  EnumerationResult r = enumerate_min_energy(seq.residues(), opts);
  if (r.best) r.best = Conformation::from_actions(seq, r.best_actions);
  return r;
}

int orbit_size(std::span<const Action> actions) {
  // The symmetries fixing the first bond act on the (x, z) projection. A
  // projection spread over both axes has a trivial stabilizer; one confined
  // to a single axis is fixed by the reflection across that axis.
  bool x = false, z = false;
  for (const Point& p : trace(actions, actions.size() + 2)) {
    x = x || p.x() != 0;
    z = z || p.z() != 0;
  }
  if (x && z) return 8;
  return x || z ? 4 : 1;
}

int verify_conformation(std::span<const Residue> residues, std::span<const Point> positions) {
  if (positions.size() != residues.size())
    throw ConformationViolation(std::min(positions.size(), residues.size()), ConstraintKind::kLength);
  std::unordered_set<Point, PointHash, PointEq> seen;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (i > 0 && (positions[i] - positions[i - 1]).cwiseAbs().sum() != 1)
      throw ConformationViolation(i, ConstraintKind::kBondLength);
    if (!seen.insert(positions[i]).second) throw ConformationViolation(i, ConstraintKind::kSelfAvoidance);
  }
  int c = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (residues[i] != Residue::H) continue;
    for (std::size_t j = i + 2; j < positions.size(); ++j)
      if (residues[j] == Residue::H && (positions[i] - positions[j]).cwiseAbs().sum() == 1) ++c;
  }
  return -c;
}

int verify_conformation(const HPSequence& seq, std::span<const Point> positions) {
  return verify_conformation(seq.residues(), positions);
}

}  // namespace hpfold
