#pragma once

// Q-networks mapping a (N, 8, 1) state to five action values: plain
// feed-forward (FFNN), reservoir + feed-forward (FFNN-R), LSTM reading the
// last hidden state (LSTM-OLH) and LSTM + multi-head attention (LSTM-A).
//
// Batched forward passes take a (B, 8N) matrix whose row b is the flattened
// state of sample b; columns [8t, 8t+8) are residue row t.

#include "hpfold/ad/ops.hpp"
#include "hpfold/ad/tape.hpp"
#include "hpfold/checkpoint.hpp"
#include "hpfold/lattice.hpp"
#include "hpfold/rng.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hpfold {

enum class Architecture { kFfnn, kFfnnR, kLstmOlh, kLstmA };

inline constexpr std::array<Architecture, 4> kAllArchitectures{
    Architecture::kFfnn, Architecture::kFfnnR, Architecture::kLstmOlh, Architecture::kLstmA};

std::string to_string(Architecture a);
Architecture architecture_from_string(std::string_view name);

struct ReservoirConfig {
  int size = 1000;
  double connectivity = 0.10;
  std::uint64_t seed = 0;
  // Rescale W to this spectral radius after sampling. Off by default: the raw
  // Xavier-uniform nonzeros can give a radius above 1, which makes long
  // recurrences saturate tanh.
  std::optional<double> spectral_radius;
};

struct AttentionConfig {
  int hidden = 512;
  int heads = 4;
  int lstm_layers = 3;
  bool qkv_bias = true;
  double forget_bias = 1.0;
};

struct NetworkConfig {
  Architecture architecture = Architecture::kFfnnR;
  int sequence_length = 0;
  std::vector<int> hidden;  // dense head widths, output layer excluded
  ReservoirConfig reservoir;
  AttentionConfig attention;
  std::uint64_t seed = 0;
};

// Benchmark sizes: FFNN 512-256-84, FFNN-R 512-256-128-84 over N_r = 1000
// (3000 for N > 36), LSTM d = 512 with 4 heads and 3 layers (5 for N > 36).
NetworkConfig paper_preset(Architecture a, int sequence_length, std::uint64_t seed = 0);
// CI sizes: heads 64-32-16, N_r = 200, d = 64, 2 LSTM layers.
NetworkConfig desk_preset(Architecture a, int sequence_length, std::uint64_t seed = 0);

void write_descriptor(const NetworkConfig& cfg, Descriptor& d);
NetworkConfig read_network_config(const Descriptor& d);

using QValues = std::array<double, kNumActions>;

Eigen::MatrixXd stack_states(std::span<const StateTensor> states);

struct ReservoirWeights {
  Eigen::SparseMatrix<double, Eigen::RowMajor> w;  // N_r x N_r, frozen
  Eigen::MatrixXd w_in;                            // N_r x 8, trainable
};

// Erdos-Renyi reservoir: each entry nonzero with probability p, nonzeros and
// W_in drawn Xavier-uniform from one generator seeded by cfg.seed.
ReservoirWeights init_reservoir(const ReservoirConfig& cfg);

class QNetwork {
 public:
  explicit QNetwork(NetworkConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~QNetwork() = default;
  QNetwork(const QNetwork&) = delete;
  QNetwork& operator=(const QNetwork&) = delete;

  const NetworkConfig& config() const { return cfg_; }
  Architecture architecture() const { return cfg_.architecture; }
  int sequence_length() const { return cfg_.sequence_length; }

  // (B, 8N) -> (B, 5).
  virtual ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& states) = 0;

  QValues q_values(const StateTensor& state);
  Eigen::MatrixXd q_values(const Eigen::MatrixXd& states);

  // Trainable tensors in registration order; frozen tensors are excluded.
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> tensors() const;
  std::size_t parameter_count() const;
  std::uint64_t parameter_checksum() const;

  // Copies every tensor (frozen ones included). Throws on architecture or
  // shape mismatch.
  void clone_weights_from(const QNetwork& other);
  std::unique_ptr<QNetwork> clone() const;

  void save(Checkpoint& ckpt, const std::string& prefix = {}) const;
  void load(const Checkpoint& ckpt, const std::string& prefix = {});

 protected:
  ad::Tensor& add_tensor(std::string name, Eigen::MatrixXd value, bool trainable = true);
  ad::Tensor& tensor(std::string_view name);
  void check_input(const Eigen::MatrixXd& states) const;

  virtual void copy_frozen_from(const QNetwork&) {}
  virtual void save_frozen(Checkpoint&, const std::string&) const {}
  virtual void load_frozen(const Checkpoint&, const std::string&) {}

 private:
  NetworkConfig cfg_;
  std::vector<std::unique_ptr<ad::Tensor>> tensors_;
};

// Dense layer y = x W + b with W stored (in, out).
struct Linear {
  ad::Tensor* weight = nullptr;
  ad::Tensor* bias = nullptr;

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
};

class FeedForwardNetwork final : public QNetwork {
 public:
  explicit FeedForwardNetwork(NetworkConfig cfg);
  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& states) override;

 private:
  std::vector<Linear> layers_;
};

class ReservoirNetwork final : public QNetwork {
 public:
  explicit ReservoirNetwork(NetworkConfig cfg);
  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& states) override;

  // Final reservoir state r(N-1) for each sample, (B, N_r).
  ad::Var reservoir_state(ad::Tape& tape, const Eigen::MatrixXd& states);

  const Eigen::SparseMatrix<double, Eigen::RowMajor>& reservoir() const { return w_; }
  void set_reservoir(Eigen::SparseMatrix<double, Eigen::RowMajor> w) { w_ = std::move(w); }
  std::uint64_t reservoir_checksum() const;

 protected:
  void copy_frozen_from(const QNetwork& other) override;
  void save_frozen(Checkpoint& ckpt, const std::string& prefix) const override;
  void load_frozen(const Checkpoint& ckpt, const std::string& prefix) override;

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> w_;
  ad::Tensor* w_in_ = nullptr;
  std::vector<Linear> head_;
};

struct LstmLayer {
  ad::Tensor* w_ih = nullptr;  // (in, 4d), gate blocks i, f, g, o
  ad::Tensor* w_hh = nullptr;  // (d, 4d)
  ad::Tensor* b_ih = nullptr;  // (1, 4d)
  ad::Tensor* b_hh = nullptr;  // (1, 4d)
};

struct AttentionWeights {
  Linear query, key, value, output;
};

struct AttentionResult {
  ad::Var output;                        // (N, d)
  std::vector<Eigen::MatrixXd> weights;  // per head, (N, N)
};

class LstmNetwork final : public QNetwork {
 public:
  explicit LstmNetwork(NetworkConfig cfg);
  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& states) override;

  bool has_attention() const { return architecture() == Architecture::kLstmA; }

  // Top-layer outputs, one (B, d) matrix per residue row.
  std::vector<ad::Var> lstm_forward(ad::Tape& tape, const Eigen::MatrixXd& states);

  // Full N x N attention over one sample's hidden states H (N, d).
  AttentionResult multihead_attention(ad::Tape& tape, ad::Var hidden);

  // Reference single-state path: LSTM -> full attention -> row N-1 -> dense.
  // The batched forward() only evaluates the last query row and must agree.
  ad::Var forward_reference(ad::Tape& tape, const StateTensor& state);

  std::vector<Eigen::MatrixXd> attention_weights(const StateTensor& state);

  AttentionWeights& attention() { return attention_; }
  const Linear& output_layer() const { return out_; }

 private:
  ad::Var last_row_attention(ad::Tape& tape, std::span<const ad::Var> hidden);

  std::vector<LstmLayer> layers_;
  AttentionWeights attention_;
  Linear out_;
};

std::unique_ptr<QNetwork> make_network(const NetworkConfig& cfg);
std::unique_ptr<QNetwork> load_network(const Checkpoint& ckpt);

}  // namespace hpfold
