#pragma once

// Exact minimum energy by exhaustive depth-first enumeration of self-avoiding
// walks from the fixed anchor, with optional symmetry and bound pruning.

#include "hpfold/lattice.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpfold {

struct EnumOptions {
  // Keep only walks whose first non-F move is L and whose first U/D move is
  // U. This picks one representative per orbit of the 8 lattice symmetries
  // fixing the first bond.
  bool symmetry_pruning = true;
  // Drop partial walks with contacts + 4 * (unplaced H) + 2 below the best
  // complete walk seen in the same subtree. Ties survive, so counts stay exact.
  bool bound_pruning = true;
  std::size_t max_n = 16;
  unsigned threads = 1;
  int split_depth = 3;  // subtrees below this many actions are searched independently
};

struct EnumerationResult {
  int min_energy = 0;
  std::uint64_t optimal_count = 0;  // optimal walks among those enumerated
  std::vector<Action> best_actions;
  std::vector<Point> best_positions;
  std::optional<Conformation> best;  // set for sequences of length >= 3
  std::uint64_t walks_explored = 0;  // complete walks reached
  std::chrono::nanoseconds elapsed{0};
};

class EnumerationLimitError : public std::length_error {
 public:
  EnumerationLimitError(std::size_t n, std::size_t max_n);
};

EnumerationResult enumerate_min_energy(std::span<const Residue> residues, const EnumOptions& opts = {});
EnumerationResult enumerate_min_energy(const HPSequence& seq, const EnumOptions& opts = {});

// Number of distinct walks in the symmetry orbit of `actions`: 1 for a
// straight line, 4 for a bent planar walk, 8 otherwise.
int orbit_size(std::span<const Action> actions);

enum class ConstraintKind { kLength, kBondLength, kSelfAvoidance };

std::string to_string(ConstraintKind k);

class ConformationViolation : public std::invalid_argument {
 public:
  ConformationViolation(std::size_t index, ConstraintKind kind);
  std::size_t index() const { return index_; }
  ConstraintKind kind() const { return kind_; }

 private:
  std::size_t index_;
  ConstraintKind kind_;
};

// Checks unit bonds and self-avoidance, then returns the contact energy.
int verify_conformation(std::span<const Residue> residues, std::span<const Point> positions);
int verify_conformation(const HPSequence& seq, std::span<const Point> positions);

}  // namespace hpfold
