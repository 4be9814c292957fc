#include "support.hpp"

#include "hpfold/lattice.hpp"

#include <doctest.h>

#include <sstream>

using namespace hpfold;
using hpfold::testing::random_rollout;
using hpfold::testing::random_sequence;

namespace {

HPSequence seq(const char* s) { return parse_hp_notation(s); }

Conformation fold(const char* s, std::initializer_list<Action> actions) {
  std::vector<Action> a(actions);
  return Conformation::from_actions(seq(s), a);
}

std::vector<std::size_t> h_indices(const HPSequence& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == Residue::H) out.push_back(i);
  return out;
}

// Depth-first over move sequences in F<L<R<U<D order; returns the first
// partial walk with no legal move.
std::optional<Conformation> first_trapped(const Conformation& c, int depth) {
  const ActionSet legal = legal_actions(c);
  if (legal.empty()) return c;
  if (depth == 0) return std::nullopt;
  for (Action a : legal.to_vector()) {
    if (auto t = first_trapped(apply_action(c, a), depth - 1)) return t;
  }
  return std::nullopt;
}

void all_complete_walks(const Conformation& c, std::vector<Conformation>& out) {
  if (c.complete()) {
    out.push_back(c);
    return;
  }
  for (Action a : legal_actions(c).to_vector()) all_complete_walks(apply_action(c, a), out);
}

}  // namespace

TEST_CASE("notation expands run-length groups") {
  const HPSequence s = seq("(HP)2PH(HP)2(PH)2HP(PH)2");
  CHECK(s.size() == 20);
  CHECK(h_indices(s) == std::vector<std::size_t>{0, 2, 5, 6, 8, 11, 13, 14, 17, 19});
  CHECK(seq("HP11HPHP8HPH2").size() == 27);
  CHECK(seq("HHH").to_string() == "HHH");
  CHECK(seq("(H(PH)2)2").to_string() == "HPHPHHPHPH");
  CHECK(seq("H12").size() == 12);
  CHECK(seq("(HP)10").to_string() == "HPHPHPHPHPHPHPHPHPHP");
}

TEST_CASE("notation errors carry byte offsets") {
  auto offset_of = [](const char* text) -> std::size_t {
    try {
      expand_hp_notation(text);
    } catch (const NotationError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  CHECK(offset_of("HP(HP") == 2);
  CHECK(offset_of("HPH)") == 3);
  CHECK(offset_of("HP()2") == 2);
  CHECK(offset_of("HP0") == 2);
  CHECK(offset_of("2HP") == 0);
  CHECK(offset_of("HPX") == 2);
  CHECK(offset_of("HP h") == 2);
  CHECK_THROWS_AS(parse_hp_notation("HP"), std::invalid_argument);
  CHECK_THROWS_AS(parse_hp_notation(""), std::invalid_argument);
}

TEST_CASE("anchor and first moves") {
  Conformation c(seq("HPHPH"));
  REQUIRE(c.positions().size() == 2);
  CHECK(c.positions()[0] == Point(0, 0, 0));
  CHECK(c.positions()[1] == Point(0, 1, 0));
  CHECK(legal_actions(c) == ActionSet::all());

  const Conformation f = apply_action(c, Action::F);
  CHECK(f.positions().back() == Point(0, 2, 0));
  CHECK(legal_actions(f) == ActionSet::all());

  const Conformation u = apply_action(c, Action::U);
  CHECK(u.positions().back() == Point(0, 1, 1));
  CHECK(u.frame().heading == Point(0, 0, 1));
  CHECK(u.frame().up == Point(0, -1, 0));

  const Conformation l = apply_action(c, Action::L);
  CHECK(l.positions().back() == Point(-1, 1, 0));
  const Conformation ll = apply_action(l, Action::L);
  CHECK(ll.positions().back() == Point(-1, 0, 0));
  CHECK(ll.actions() == std::vector<Action>{Action::L, Action::L});
}

TEST_CASE("frame transport keeps an orthonormal integer frame") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    TurtleFrame f;
    for (int k = 0; k < 30; ++k) {
      const Point d = f.direction(kAllActions[rng.uniform_int(5)]);
      f = f.transported(d);
      CHECK(f.heading == d);
      CHECK(f.heading.dot(f.up) == 0);
      CHECK(f.heading.cwiseAbs().sum() == 1);
      CHECK(f.up.cwiseAbs().sum() == 1);
    }
  }
}

TEST_CASE("illegal move reports its target") {
  const Conformation c = fold("HHHHH", {Action::L, Action::L});
  // From (-1,0,0) heading (0,-1,0): L points to +x, i.e. back to the origin.
  CHECK_FALSE(legal_actions(c).contains(Action::L));
  try {
    apply_action(c, Action::L);
    FAIL("expected IllegalActionError");
  } catch (const IllegalActionError& e) {
    CHECK(e.action() == Action::L);
    CHECK(e.target() == Point(0, 0, 0));
  }
  CHECK_THROWS_AS(legal_actions(fold("HHH", {Action::F})), std::logic_error);
}

TEST_CASE("a trapped prefix has no legal moves") {
  const auto trapped = first_trapped(Conformation(seq("P20")), 12);
  REQUIRE(trapped.has_value());
  CHECK(trapped->placed() < 20);
  const Point tip = trapped->positions().back();
  int free_neighbours = 0;
  for (const Point& d : {Point(1, 0, 0), Point(-1, 0, 0), Point(0, 1, 0), Point(0, -1, 0),
                         Point(0, 0, 1), Point(0, 0, -1)})
    free_neighbours += trapped->occupied(tip + d) ? 0 : 1;
  CHECK(free_neighbours == 0);

  const auto prefix = std::vector<Action>(trapped->actions().begin(), trapped->actions().end() - 1);
  const Conformation before = Conformation::from_actions(trapped->sequence(), prefix);
  const StepResult r = step(before, trapped->actions().back(), RewardConfig{2.5});
  REQUIRE(r.terminal());
  CHECK(r.outcome->kind == TerminalKind::Trapped);
  CHECK(r.reward == doctest::Approx(-2.5));
}

TEST_CASE("energy counts non-consecutive H-H contacts") {
  CHECK(energy(fold("HHHH", {Action::L, Action::L})) == -1);
  CHECK(energy(fold("PPPPPP", {Action::L, Action::L, Action::U, Action::F})) == 0);

  const HPSequence hph = seq("HPH");
  const std::vector<Point> bent{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  CHECK(contacts(hph, bent) == 0);

  // Hamiltonian path on the unit cube: 12 edges, 7 on the chain, 5 contacts.
  const std::vector<Point> cube{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0},
                                {1, 0, 1}, {1, 1, 1}, {0, 1, 1}, {0, 0, 1}};
  CHECK(contacts(seq("H8"), cube) == 5);
  CHECK(contacts(seq("PH6P"), cube) == 2);
}

TEST_CASE("step rewards only at termination") {
  Conformation c(seq("HHHH"));
  StepResult r1 = step(c, Action::L);
  CHECK_FALSE(r1.terminal());
  CHECK(r1.reward == 0.0);
  StepResult r2 = step(r1.next, Action::L);
  REQUIRE(r2.terminal());
  CHECK(r2.reward == 1.0);
  CHECK(r2.outcome->kind == TerminalKind::Completed);
  CHECK(r2.outcome->energy == -1);
  CHECK(r2.outcome->contacts == 1);

  Rng rng(11);
  const HPSequence all_p = seq("P9");
  for (int k = 0; k < 50; ++k) {
    Conformation w(all_p);
    while (true) {
      const auto legal = legal_actions(w).to_vector();
      const StepResult s = step(w, legal[rng.uniform_int(legal.size())]);
      if (s.terminal()) {
        CHECK(s.reward == 0.0);
        break;
      }
      CHECK(s.reward == 0.0);
      w = s.next;
    }
  }
}

TEST_CASE("state encoding") {
  const Conformation fresh(seq("HPH"));
  const StateTensor s0 = encode_state(fresh);
  REQUIRE(s0.rows() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s0.at(i, StateTensor::kSlotND) == 1);
  CHECK(s0.at(0, StateTensor::kSlotH) == 1);
  CHECK(s0.at(1, StateTensor::kSlotP) == 1);
  CHECK(s0.at(2, StateTensor::kSlotH) == 1);

  const StateTensor s1 = encode_state(apply_action(fresh, Action::F));
  CHECK(s1.at(2, 1 + static_cast<std::size_t>(Action::F)) == 1);
  CHECK(s1.at(2, StateTensor::kSlotND) == 0);
  CHECK(s1.at(0, StateTensor::kSlotND) == 1);
  CHECK(s1.at(1, StateTensor::kSlotND) == 1);

  std::vector<Conformation> walks;
  all_complete_walks(Conformation(seq("HPPHPH")), walks);
  CHECK(walks.size() > 100);
  for (const auto& w : walks) {
    const StateTensor s = encode_state(w);
    for (std::size_t i = 0; i < s.rows(); ++i) CHECK((s.at(i, StateTensor::kSlotND) == 1) == (i < 2));
  }
}

TEST_CASE("random rollouts respect chain constraints") {
  Rng rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    const HPSequence s = random_sequence(3 + rng.uniform_int(28), rng);
    const Conformation c = random_rollout(s, rng);
    const auto& p = c.positions();
    REQUIRE(c.actions().size() == p.size() - 2);
    std::unordered_set<Point, PointHash, PointEq> seen(p.begin(), p.end());
    REQUIRE(seen.size() == p.size());
    for (std::size_t i = 1; i < p.size(); ++i) REQUIRE((p[i] - p[i - 1]).cwiseAbs().sum() == 1);
    for (std::size_t i = 2; i < p.size(); ++i) {
      const int dot = (p[i] - p[i - 1]).dot(p[i - 1] - p[i - 2]);
      REQUIRE((dot == 0 || dot == 1));
    }
    REQUIRE(energy(c) <= 0);
    if (!c.complete()) {
      REQUIRE(legal_actions(c).empty());
    } else {
      continue;
    }
  }
}

TEST_CASE("legal moves never point backwards and encodings stay one-hot") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const HPSequence s = random_sequence(12, rng);
    Conformation c(s);
    while (!c.complete()) {
      const ActionSet legal = legal_actions(c);
      for (Action a : legal.to_vector()) CHECK(c.target(a) != c.positions()[c.placed() - 2]);
      const StateTensor st = encode_state(c);
      for (std::size_t i = 0; i < st.rows(); ++i) {
        int moves = 0;
        for (std::size_t k = 0; k < 6; ++k) moves += st.at(i, k);
        CHECK(moves == 1);
        CHECK(st.at(i, StateTensor::kSlotH) + st.at(i, StateTensor::kSlotP) == 1);
      }
      if (legal.empty()) break;
      const auto v = legal.to_vector();
      c = apply_action(c, v[rng.uniform_int(v.size())]);
    }
  }
}

TEST_CASE("energy is invariant under the 48 cube symmetries") {
  const auto syms = hpfold::testing::cube_symmetries();
  REQUIRE(syms.size() == 48);
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const HPSequence s = random_sequence(20, rng, 0.6);
    const Conformation c = random_rollout(s, rng);
    const int e = energy(c);
    for (const auto& m : syms) {
      std::vector<Point> moved;
      for (const Point& p : c.positions()) moved.push_back(m * p);
      CHECK(-contacts(s, moved) == e);
    }
  }
}

TEST_CASE("conformation text round trip") {
  const Conformation c = fold("HPPH", {Action::L, Action::L});
  const std::string text = format_conformation(c);
  CHECK(text.rfind("#hpfold-conformation v1 seq=HPPH energy=-1\n", 0) == 0);
  std::istringstream is(text);
  const ConformationRecord rec = read_conformation(is);
  CHECK(rec.label == "HPPH");
  CHECK(rec.energy == -1);
  CHECK(rec.positions == c.positions());
  CHECK(rec.residues.size() == 4);

  const Conformation named = Conformation(parse_hp_notation("HPPH", "tiny"));
  CHECK(format_conformation(named).rfind("#hpfold-conformation v1 seq=tiny energy=0\n", 0) == 0);
}
