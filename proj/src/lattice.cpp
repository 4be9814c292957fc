#include "hpfold/lattice.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace hpfold {

char to_char(Residue r) { return r == Residue::H ? 'H' : 'P'; }

char to_char(Action a) {
  static constexpr char kNames[] = {'F', 'L', 'R', 'U', 'D'};
  return kNames[static_cast<int>(a)];
}

std::optional<Action> action_from_char(char c) {
  switch (c) {
    case 'F': return Action::F;
    case 'L': return Action::L;
    case 'R': return Action::R;
    case 'U': return Action::U;
    case 'D': return Action::D;
    default: return std::nullopt;
  }
}

std::vector<Action> ActionSet::to_vector() const {
  std::vector<Action> out;
  for (Action a : kAllActions)
    if (contains(a)) out.push_back(a);
  return out;
}

// ---------------------------------------------------------------------------
// Sequences

HPSequence::HPSequence(std::vector<Residue> residues, std::string id)
    : residues_(std::make_shared<const std::vector<Residue>>(std::move(residues))),
      id_(std::move(id)) {
  if (residues_->size() < kMinLength)
    throw std::invalid_argument("HP sequence needs at least 3 residues, got " +
                                std::to_string(residues_->size()));
}

std::string HPSequence::to_string() const {
  std::string s;
  s.reserve(size());
  for (Residue r : *residues_) s.push_back(to_char(r));
  return s;
}

std::size_t HPSequence::count(Residue r) const {
  std::size_t n = 0;
  for (Residue x : *residues_) n += (x == r);
  return n;
}

namespace {

class NotationParser {
 public:
  explicit NotationParser(std::string_view text) : text_(text) {}

  std::vector<Residue> parse() {
    auto out = parse_items(/*depth=*/0);
    if (pos_ < text_.size()) throw NotationError("unbalanced ')'", pos_);
    return out;
  }

 private:
  std::vector<Residue> parse_items(int depth) {
    std::vector<Residue> out;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      std::vector<Residue> operand;
      if (c == 'H' || c == 'P') {
        operand.push_back(c == 'H' ? Residue::H : Residue::P);
        ++pos_;
      } else if (c == '(') {
        const std::size_t open = pos_++;
        operand = parse_items(depth + 1);
        if (pos_ >= text_.size() || text_[pos_] != ')') throw NotationError("unbalanced '('", open);
        if (operand.empty()) throw NotationError("empty group", open);
        ++pos_;
      } else if (c == ')') {
        if (depth == 0) throw NotationError("unbalanced ')'", pos_);
        return out;
      } else if (c >= '0' && c <= '9') {
        throw NotationError("exponent without operand", pos_);
      } else {
        throw NotationError(std::string("illegal character '") + c + "'", pos_);
      }

      std::size_t repeat = 1;
      if (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
        const std::size_t start = pos_;
        repeat = 0;
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
          repeat = repeat * 10 + static_cast<std::size_t>(text_[pos_] - '0');
          if (repeat > 100000) throw NotationError("exponent too large", start);
          ++pos_;
        }
        if (repeat == 0) throw NotationError("exponent 0", start);
      }
      for (std::size_t k = 0; k < repeat; ++k) out.insert(out.end(), operand.begin(), operand.end());
    }
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Residue> expand_hp_notation(std::string_view text) {
  return NotationParser(text).parse();
}

HPSequence parse_hp_notation(std::string_view text, std::string id) {
  auto residues = expand_hp_notation(text);
  if (residues.size() < HPSequence::kMinLength)
    throw NotationError("sequence shorter than 3 residues", text.size());
  return HPSequence(std::move(residues), std::move(id));
}

// ---------------------------------------------------------------------------
// Frame and walk

Point TurtleFrame::direction(Action a) const {
  switch (a) {
    case Action::F: return heading;
    case Action::L: return left();
    case Action::R: return -left();
    case Action::U: return up;
    case Action::D: return -up;
  }
  return heading;
}

TurtleFrame TurtleFrame::transported(const Point& moved) const {
  TurtleFrame next;
  next.heading = moved;
  if (moved == up)
    next.up = -heading;
  else if (moved == -up)
    next.up = heading;
  else
    next.up = up;
  return next;
}

IllegalActionError::IllegalActionError(Action a, const Point& target)
    : std::invalid_argument([&] {
        std::ostringstream os;
        os << "illegal action " << to_char(a) << ": target (" << target.x() << "," << target.y()
           << "," << target.z() << ") is occupied";
        return os.str();
      }()),
      action_(a),
      target_(target) {}

Conformation::Conformation(HPSequence sequence) : sequence_(std::move(sequence)) {
  positions_.reserve(sequence_.size());
  positions_.emplace_back(0, 0, 0);
  positions_.emplace_back(0, 1, 0);
  occupied_.insert(positions_[0]);
  occupied_.insert(positions_[1]);
}

Conformation Conformation::from_actions(HPSequence sequence, std::span<const Action> actions) {
  Conformation c(std::move(sequence));
  for (Action a : actions) c = apply_action(c, a);
  return c;
}

ActionSet legal_actions(const Conformation& c) {
  if (c.complete()) throw std::logic_error("legal_actions called on a complete conformation");
  ActionSet set;
  for (Action a : kAllActions)
    if (!c.occupied(c.target(a))) set.insert(a);
  return set;
}

Conformation apply_action(const Conformation& c, Action a) {
  if (c.complete()) throw std::logic_error("apply_action called on a complete conformation");
  const Point dir = c.frame_.direction(a);
  const Point target = c.positions_.back() + dir;
  if (c.occupied(target)) throw IllegalActionError(a, target);
  Conformation next = c;
  next.positions_.push_back(target);
  next.occupied_.insert(target);
  next.actions_.push_back(a);
  next.frame_ = c.frame_.transported(dir);
  return next;
}

int contacts(const HPSequence& seq, std::span<const Point> positions) {
  int n = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (seq[i] != Residue::H) continue;
    for (std::size_t j = i + 2; j < positions.size(); ++j) {
      if (seq[j] != Residue::H) continue;
      if ((positions[i] - positions[j]).cwiseAbs().sum() == 1) ++n;
    }
  }
  return n;
}

int contacts(const Conformation& c) { return contacts(c.sequence(), c.positions()); }

int energy(const Conformation& c) { return -contacts(c); }

StepResult step(const Conformation& c, Action a, const RewardConfig& rewards) {
  StepResult result{apply_action(c, a), 0.0, std::nullopt};
  const Conformation& next = result.next;
  if (next.complete()) {
    const int k = contacts(next);
    result.reward = k;
    result.outcome = FoldOutcome{next, -k, k, TerminalKind::Completed};
  } else if (legal_actions(next).empty()) {
    const int k = contacts(next);
    result.reward = k - rewards.trap_penalty;
    result.outcome = FoldOutcome{next, -k, k, TerminalKind::Trapped};
  }
  return result;
}

// ---------------------------------------------------------------------------
// Encoding and text format

StateTensor encode_state(const Conformation& c) {
  const std::size_t n = c.sequence().size();
  StateTensor s(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t slot = StateTensor::kSlotND;
    if (i >= 2 && i < c.placed()) slot = 1 + static_cast<std::size_t>(c.actions()[i - 2]);
    s.set(i, slot, 1);
    s.set(i, c.sequence()[i] == Residue::H ? StateTensor::kSlotH : StateTensor::kSlotP, 1);
  }
  return s;
}

Eigen::RowVectorXd StateTensor::flattened() const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(data_.size()));
  write_row(row);
  return row;
}

void write_conformation(std::ostream& os, const Conformation& c) {
  os << "#hpfold-conformation v1 seq=" << c.sequence().label() << " energy=" << energy(c) << '\n';
  for (std::size_t i = 0; i < c.placed(); ++i) {
    const Point& p = c.positions()[i];
    os << i << ' ' << to_char(c.sequence()[i]) << ' ' << p.x() << ' ' << p.y() << ' ' << p.z()
       << '\n';
  }
}

std::string format_conformation(const Conformation& c) {
  std::ostringstream os;
  write_conformation(os, c);
  return os.str();
}

ConformationRecord read_conformation(std::istream& is) {
  ConformationRecord rec;
  std::string line;
  if (!std::getline(is, line) || line.rfind("#hpfold-conformation v1", 0) != 0)
    throw std::invalid_argument("missing '#hpfold-conformation v1' header");
  std::istringstream header(line.substr(std::string("#hpfold-conformation v1").size()));
  std::string field;
  while (header >> field) {
    if (field.rfind("seq=", 0) == 0) rec.label = field.substr(4);
    else if (field.rfind("energy=", 0) == 0) rec.energy = std::stoi(field.substr(7));
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t index;
    char kind;
    int x, y, z;
    if (!(ls >> index >> kind >> x >> y >> z) || (kind != 'H' && kind != 'P') ||
        index != rec.positions.size())
      throw std::invalid_argument("malformed conformation record on line " +
                                  std::to_string(line_no));
    rec.residues.push_back(kind == 'H' ? Residue::H : Residue::P);
    rec.positions.emplace_back(x, y, z);
  }
  return rec;
}

}  // namespace hpfold
