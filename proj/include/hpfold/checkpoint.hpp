#pragma once

// HPQN binary checkpoints, little-endian:
//   "HPQN" | u32 version | u32 descriptor length | descriptor bytes (UTF-8
//   key=value lines) | u32 record count | records...
// Each record: u32 name length | name | u32 rank | rank x u64 dims |
// prod(dims) x f64 data.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpfold {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered key=value text block.
class Descriptor {
 public:
  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, unsigned long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, unsigned long long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  long long require_int(const std::string& key) const;
  double require_double(const std::string& key) const;
  bool require_bool(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;
  static Descriptor parse(const std::string& text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct CheckpointRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  static CheckpointRecord from_matrix(std::string name, const Eigen::MatrixXd& m);
  Eigen::MatrixXd to_matrix() const;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  Descriptor descriptor;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
  const CheckpointRecord& require(const std::string& name) const;
  void add(std::string name, const Eigen::MatrixXd& m) {
    records.push_back(CheckpointRecord::from_matrix(std::move(name), m));
  }
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hpfold
