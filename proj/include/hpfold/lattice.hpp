#pragma once

// Cubic-lattice HP environment: sequences, self-avoiding walks with a turtle
// frame, legal moves, contact energy, rewards and the one-hot state tensor.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace hpfold {

using Point = Eigen::Vector3i;

struct PointHash {
  std::size_t operator()(const Point& p) const noexcept {
    // Coordinates stay within +-64 for every sequence we handle; pack them.
    const auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)); };
    std::uint64_t h = (u(p.x()) * 0x9E3779B97F4A7C15ULL) ^ (u(p.y()) * 0xC2B2AE3D27D4EB4FULL) ^
                      (u(p.z()) * 0x165667B19E3779F9ULL);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

struct PointEq {
  bool operator()(const Point& a, const Point& b) const noexcept { return a == b; }
};

enum class Residue : std::uint8_t { H = 0, P = 1 };

char to_char(Residue r);

// Policy actions in their fixed tie-break order. ND is a state-encoding marker
// only and never part of the action space.
enum class Action : std::uint8_t { F = 0, L = 1, R = 2, U = 3, D = 4 };

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::F, Action::L, Action::R,
                                                             Action::U, Action::D};

char to_char(Action a);
std::optional<Action> action_from_char(char c);

// Bit set over the five policy actions.
class ActionSet {
 public:
  ActionSet() = default;
  static ActionSet all() { return ActionSet(0x1F); }

  void insert(Action a) { bits_ |= bit(a); }
  void remove(Action a) { bits_ &= static_cast<std::uint8_t>(~bit(a)); }
  bool contains(Action a) const { return (bits_ & bit(a)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }
  std::uint8_t bits() const { return bits_; }
  static ActionSet from_bits(std::uint8_t b) { return ActionSet(b & 0x1F); }

  std::vector<Action> to_vector() const;

  friend bool operator==(ActionSet, ActionSet) = default;

 private:
  explicit ActionSet(std::uint8_t b) : bits_(b) {}
  static std::uint8_t bit(Action a) { return static_cast<std::uint8_t>(1u << static_cast<int>(a)); }
  std::uint8_t bits_ = 0;
};

// Thrown by parse_hp_notation; offset is the byte position of the problem.
class NotationError : public std::invalid_argument {
 public:
  NotationError(const std::string& what, std::size_t offset)
      : std::invalid_argument(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class HPSequence {
 public:
  static constexpr std::size_t kMinLength = 3;

  explicit HPSequence(std::vector<Residue> residues, std::string id = {});

  std::size_t size() const { return residues_->size(); }
  Residue operator[](std::size_t i) const { return (*residues_)[i]; }
  std::span<const Residue> residues() const { return *residues_; }
  const std::string& id() const { return id_; }
  std::string to_string() const;
  std::size_t count(Residue r) const;

  // Label used in exported headers: the benchmark id when known, else the
  // expanded H/P string.
  std::string label() const { return id_.empty() ? to_string() : id_; }

  friend bool operator==(const HPSequence& a, const HPSequence& b) {
    return *a.residues_ == *b.residues_;
  }

 private:
  std::shared_ptr<const std::vector<Residue>> residues_;
  std::string id_;
};

// Expands run-length notation such as "(HP)2PH(HP)2" or "HP11HPHP8HPH2".
// Exponents bind to the preceding letter or parenthesized group; groups nest.
std::vector<Residue> expand_hp_notation(std::string_view text);
HPSequence parse_hp_notation(std::string_view text, std::string id = {});

struct TurtleFrame {
  Point heading{0, 1, 0};
  Point up{0, 0, 1};

  Point left() const { return up.cross(heading); }
  Point direction(Action a) const;
  // Frame after a unit move along `moved` (one of the five action directions).
  TurtleFrame transported(const Point& moved) const;
};

class IllegalActionError : public std::invalid_argument {
 public:
  IllegalActionError(Action a, const Point& target);
  Action action() const { return action_; }
  const Point& target() const { return target_; }

 private:
  Action action_;
  Point target_;
};

class Conformation {
 public:
  // Anchor: residue 0 at the origin, residue 1 at (0,1,0).
  explicit Conformation(HPSequence sequence);

  const HPSequence& sequence() const { return sequence_; }
  const std::vector<Point>& positions() const { return positions_; }
  const std::vector<Action>& actions() const { return actions_; }
  const TurtleFrame& frame() const { return frame_; }
  std::size_t placed() const { return positions_.size(); }
  bool complete() const { return positions_.size() == sequence_.size(); }
  bool occupied(const Point& p) const { return occupied_.contains(p); }
  Point target(Action a) const { return positions_.back() + frame_.direction(a); }

  // Rebuilds a conformation from an action sequence; throws IllegalActionError.
  static Conformation from_actions(HPSequence sequence, std::span<const Action> actions);

 private:
  friend Conformation apply_action(const Conformation& c, Action a);

  HPSequence sequence_;
  std::vector<Point> positions_;
  std::vector<Action> actions_;
  TurtleFrame frame_;
  std::unordered_set<Point, PointHash, PointEq> occupied_;
};

ActionSet legal_actions(const Conformation& c);
Conformation apply_action(const Conformation& c, Action a);

// Number of H-H pairs with sequence separation >= 2 at lattice distance 1.
int contacts(const HPSequence& seq, std::span<const Point> positions);
int contacts(const Conformation& c);
int energy(const Conformation& c);

enum class TerminalKind : std::uint8_t { Completed, Trapped };

struct FoldOutcome {
  Conformation conformation;
  int energy = 0;
  int contacts = 0;
  TerminalKind kind = TerminalKind::Completed;
};

struct RewardConfig {
  double trap_penalty = 0.0;
};

struct StepResult {
  Conformation next;
  double reward = 0.0;
  std::optional<FoldOutcome> outcome;  // set when the episode ended

  bool terminal() const { return outcome.has_value(); }
};

StepResult step(const Conformation& c, Action a, const RewardConfig& rewards = {});

// (N, 8, 1) one-hot state. Slots 0-5: {ND, F, L, R, U, D}; slots 6-7: {H, P}.
class StateTensor {
 public:
  static constexpr std::size_t kFeatures = 8;
  static constexpr std::size_t kSlotND = 0;
  static constexpr std::size_t kSlotH = 6;
  static constexpr std::size_t kSlotP = 7;

  StateTensor() = default;
  explicit StateTensor(std::size_t rows) : data_(rows * kFeatures, 0) {}

  std::size_t rows() const { return data_.size() / kFeatures; }
  std::uint8_t at(std::size_t row, std::size_t slot) const { return data_[row * kFeatures + slot]; }
  void set(std::size_t row, std::size_t slot, std::uint8_t v) { data_[row * kFeatures + slot] = v; }
  std::span<const std::uint8_t> flat() const { return data_; }

  // Writes the 8N flattened encoding (row-major over residues) into `out`.
  template <typename Derived>
  void write_row(Eigen::DenseBase<Derived>& out) const {
    for (std::size_t i = 0; i < data_.size(); ++i) out(static_cast<Eigen::Index>(i)) = data_[i];
  }
  Eigen::RowVectorXd flattened() const;

  friend bool operator==(const StateTensor&, const StateTensor&) = default;

 private:
  std::vector<std::uint8_t> data_;
};

StateTensor encode_state(const Conformation& c);

// Text export: header "#hpfold-conformation v1 seq=<id> energy=<E>" and one
// "index kind x y z" line per residue.
void write_conformation(std::ostream& os, const Conformation& c);
std::string format_conformation(const Conformation& c);

struct ConformationRecord {
  std::string label;
  std::optional<int> energy;
  std::vector<Residue> residues;
  std::vector<Point> positions;
};

ConformationRecord read_conformation(std::istream& is);

}  // namespace hpfold
