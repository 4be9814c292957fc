#include "hpfold/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace hpfold {

namespace {

constexpr char kMagic[4] = {'H', 'P', 'Q', 'N'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, std::uint32_t limit) {
  const auto n = get<std::uint32_t>(is);
  if (n > limit) throw CheckpointError("bad checkpoint string length");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw CheckpointError("truncated checkpoint");
  return s;
}

}  // namespace

void Descriptor::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

void Descriptor::set(const std::string& key, double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  set(key, std::string(buf, res.ptr));
}

std::optional<std::string> Descriptor::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

std::string Descriptor::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw CheckpointError("checkpoint descriptor lacks '" + key + "'");
  return *v;
}

long long Descriptor::require_int(const std::string& key) const {
  const std::string v = require(key);
  long long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw CheckpointError("descriptor field '" + key + "' is not an integer");
  return out;
}

double Descriptor::require_double(const std::string& key) const {
  const std::string v = require(key);
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw CheckpointError("descriptor field '" + key + "' is not a number");
  return out;
}

bool Descriptor::require_bool(const std::string& key) const {
  const std::string v = require(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw CheckpointError("descriptor field '" + key + "' is not a boolean");
}

std::string Descriptor::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

Descriptor Descriptor::parse(const std::string& text) {
  Descriptor d;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed descriptor line '" + line + "'");
    d.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return d;
}

CheckpointRecord CheckpointRecord::from_matrix(std::string name, const Eigen::MatrixXd& m) {
  CheckpointRecord r;
  r.name = std::move(name);
  r.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  r.data.resize(static_cast<std::size_t>(m.size()));
  // Row-major payload.
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.data[k++] = m(i, j);
  return r;
}

Eigen::MatrixXd CheckpointRecord::to_matrix() const {
  Eigen::Index rows = 1, cols = 1;
  if (dims.size() == 1) {
    cols = static_cast<Eigen::Index>(dims[0]);
  } else if (dims.size() == 2) {
    rows = static_cast<Eigen::Index>(dims[0]);
    cols = static_cast<Eigen::Index>(dims[1]);
  } else if (!dims.empty()) {
    throw CheckpointError("record '" + name + "' has rank " + std::to_string(dims.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[k++];
  return m;
}

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

const CheckpointRecord& Checkpoint::require(const std::string& name) const {
  const auto* r = find(name);
  if (r == nullptr) throw CheckpointError("checkpoint lacks record '" + name + "'");
  return *r;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, ckpt.version);
  put_string(os, ckpt.descriptor.to_string());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    put_string(os, r.name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put<std::uint64_t>(os, d);
    for (double v : r.data) put<double>(os, v);
  }
  if (!os) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad checkpoint header");
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(is);
  if (ckpt.version != Checkpoint::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.descriptor = Descriptor::parse(get_string(is, 1u << 24));
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = get_string(is, 1u << 16);
    const auto rank = get<std::uint32_t>(is);
    if (rank > 8) throw CheckpointError("record '" + r.name + "' has implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.dims.push_back(get<std::uint64_t>(is));
      n *= r.dims.back();
      if (n > kMaxElements) throw CheckpointError("record '" + r.name + "' is too large");
    }
    r.data.resize(n);
    for (auto& v : r.data) v = get<double>(is);
    ckpt.records.push_back(std::move(r));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path.string() + "'");
  return read_checkpoint(is);
}

}  // namespace hpfold
