#include "hpfold/networks.hpp"

#include "hpfold/ad/adam.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hpfold {

namespace {

constexpr int kFeatures = static_cast<int>(StateTensor::kFeatures);
constexpr int kOutputs = static_cast<int>(kNumActions);

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

// Distinct stream per purpose so changing one component's size does not shift
// another's initialization.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::kFfnn: return "ffnn";
    case Architecture::kFfnnR: return "ffnn-r";
    case Architecture::kLstmOlh: return "lstm-olh";
    case Architecture::kLstmA: return "lstm-a";
  }
  return "?";
}

Architecture architecture_from_string(std::string_view name) {
  for (Architecture a : kAllArchitectures)
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown architecture '" + std::string(name) +
                              "' (expected ffnn, ffnn-r, lstm-olh or lstm-a)");
}

NetworkConfig paper_preset(Architecture a, int n, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.architecture = a;
  cfg.sequence_length = n;
  cfg.seed = seed;
  cfg.hidden = a == Architecture::kFfnnR ? std::vector<int>{512, 256, 128, 84}
                                         : std::vector<int>{512, 256, 84};
  cfg.reservoir.size = n <= 36 ? 1000 : 3000;
  cfg.reservoir.connectivity = 0.10;
  cfg.reservoir.seed = mix_seed(seed, 101);
  cfg.attention.hidden = 512;
  cfg.attention.heads = 4;
  cfg.attention.lstm_layers = n <= 36 ? 3 : 5;
  return cfg;
}

NetworkConfig desk_preset(Architecture a, int n, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.architecture = a;
  cfg.sequence_length = n;
  cfg.seed = seed;
  cfg.hidden = {64, 32, 16};
  cfg.reservoir.size = 200;
  cfg.reservoir.connectivity = 0.10;
  cfg.reservoir.seed = mix_seed(seed, 101);
  cfg.attention.hidden = 64;
  cfg.attention.heads = 4;
  cfg.attention.lstm_layers = 2;
  return cfg;
}

void write_descriptor(const NetworkConfig& cfg, Descriptor& d) {
  d.set("arch", to_string(cfg.architecture));
  d.set("sequence_length", cfg.sequence_length);
  d.set("hidden", join_ints(cfg.hidden));
  d.set("seed", static_cast<unsigned long long>(cfg.seed));
  d.set("reservoir.size", cfg.reservoir.size);
  d.set("reservoir.connectivity", cfg.reservoir.connectivity);
  d.set("reservoir.seed", static_cast<unsigned long long>(cfg.reservoir.seed));
  if (cfg.reservoir.spectral_radius) d.set("reservoir.spectral_radius", *cfg.reservoir.spectral_radius);
  d.set("attention.hidden", cfg.attention.hidden);
  d.set("attention.heads", cfg.attention.heads);
  d.set("attention.lstm_layers", cfg.attention.lstm_layers);
  d.set("attention.qkv_bias", cfg.attention.qkv_bias);
  d.set("attention.forget_bias", cfg.attention.forget_bias);
}

NetworkConfig read_network_config(const Descriptor& d) {
  NetworkConfig cfg;
  try {
    cfg.architecture = architecture_from_string(d.require("arch"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  cfg.sequence_length = static_cast<int>(d.require_int("sequence_length"));
  cfg.hidden = split_ints(d.require("hidden"));
  cfg.seed = static_cast<std::uint64_t>(std::stoull(d.require("seed")));
  cfg.reservoir.size = static_cast<int>(d.require_int("reservoir.size"));
  cfg.reservoir.connectivity = d.require_double("reservoir.connectivity");
  cfg.reservoir.seed = static_cast<std::uint64_t>(std::stoull(d.require("reservoir.seed")));
  if (d.get("reservoir.spectral_radius"))
    cfg.reservoir.spectral_radius = d.require_double("reservoir.spectral_radius");
  cfg.attention.hidden = static_cast<int>(d.require_int("attention.hidden"));
  cfg.attention.heads = static_cast<int>(d.require_int("attention.heads"));
  cfg.attention.lstm_layers = static_cast<int>(d.require_int("attention.lstm_layers"));
  cfg.attention.qkv_bias = d.require_bool("attention.qkv_bias");
  cfg.attention.forget_bias = d.require_double("attention.forget_bias");
  return cfg;
}

Eigen::MatrixXd stack_states(std::span<const StateTensor> states) {
  if (states.empty()) throw std::invalid_argument("stack_states: empty batch");
  const auto width = static_cast<Eigen::Index>(states.front().flat().size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(states.size()), width);
  for (std::size_t b = 0; b < states.size(); ++b) {
    if (static_cast<Eigen::Index>(states[b].flat().size()) != width)
      throw std::invalid_argument("stack_states: states of different lengths");
    auto row = out.row(static_cast<Eigen::Index>(b));
    states[b].write_row(row);
  }
  return out;
}

ReservoirWeights init_reservoir(const ReservoirConfig& cfg) {
  if (cfg.size < 1) throw std::invalid_argument("reservoir size must be positive");
  if (!(cfg.connectivity > 0.0 && cfg.connectivity <= 1.0))
    throw std::invalid_argument("reservoir connectivity must lie in (0, 1]");
  Rng rng(cfg.seed);
  const int n = cfg.size;
  const double bound = std::sqrt(6.0 / (2.0 * n));
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(cfg.connectivity * n * n * 1.1) + 16);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cfg.connectivity >= 1.0 || rng.bernoulli(cfg.connectivity))
        entries.emplace_back(i, j, rng.uniform(-bound, bound));
  ReservoirWeights out;
  out.w.resize(n, n);
  out.w.setFromTriplets(entries.begin(), entries.end());
  out.w.makeCompressed();
  out.w_in = ad::xavier_uniform<double>(n, kFeatures, rng);

  if (cfg.spectral_radius) {
    const Eigen::MatrixXd dense(out.w);
    const double radius = Eigen::EigenSolver<Eigen::MatrixXd>(dense, false).eigenvalues().cwiseAbs().maxCoeff();
    if (radius > 0) out.w *= *cfg.spectral_radius / radius;
  }
  return out;
}

// ---------------------------------------------------------------------------
// QNetwork

QValues QNetwork::q_values(const StateTensor& state) {
  const Eigen::MatrixXd q = q_values(state.flattened());
  QValues out;
  for (std::size_t a = 0; a < kNumActions; ++a) out[a] = q(0, static_cast<Eigen::Index>(a));
  return out;
}

Eigen::MatrixXd QNetwork::q_values(const Eigen::MatrixXd& states) {
  ad::Tape tape(/*record_gradients=*/false);
  return forward(tape, states).value();
}

std::vector<ad::Tensor*> QNetwork::parameters() {
  std::vector<ad::Tensor*> out;
  for (auto& t : tensors_)
    if (t->requires_grad) out.push_back(t.get());
  return out;
}

std::vector<const ad::Tensor*> QNetwork::tensors() const {
  std::vector<const ad::Tensor*> out;
  for (const auto& t : tensors_) out.push_back(t.get());
  return out;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_)
    if (t->requires_grad) n += static_cast<std::size_t>(t->value.size());
  return n;
}

std::uint64_t QNetwork::parameter_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors_)
    if (t->requires_grad)
      h = fnv1a(t->value.data(), static_cast<std::size_t>(t->value.size()) * sizeof(double), h);
  return h;
}

void QNetwork::clone_weights_from(const QNetwork& other) {
  if (other.architecture() != architecture() || other.tensors_.size() != tensors_.size())
    throw std::invalid_argument("clone_weights_from: architecture mismatch");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& src = *other.tensors_[i];
    auto& dst = *tensors_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() ||
        src.value.cols() != dst.value.cols())
      throw std::invalid_argument("clone_weights_from: tensor '" + dst.name + "' does not match");
    dst.value = src.value;
  }
  copy_frozen_from(other);
}

std::unique_ptr<QNetwork> QNetwork::clone() const {
  auto copy = make_network(cfg_);
  copy->clone_weights_from(*this);
  return copy;
}

void QNetwork::save(Checkpoint& ckpt, const std::string& prefix) const {
  if (prefix.empty()) write_descriptor(cfg_, ckpt.descriptor);
  for (const auto& t : tensors_) ckpt.add(prefix + t->name, t->value);
  save_frozen(ckpt, prefix);
}

void QNetwork::load(const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& t : tensors_) {
    const auto& rec = ckpt.require(prefix + t->name);
    Eigen::MatrixXd m = rec.to_matrix();
    if (m.rows() != t->value.rows() || m.cols() != t->value.cols())
      throw CheckpointError("record '" + rec.name + "' has the wrong shape for this architecture");
    t->value = std::move(m);
  }
  load_frozen(ckpt, prefix);
}

ad::Tensor& QNetwork::add_tensor(std::string name, Eigen::MatrixXd value, bool trainable) {
  tensors_.push_back(std::make_unique<ad::Tensor>(std::move(name), std::move(value), trainable));
  return *tensors_.back();
}

ad::Tensor& QNetwork::tensor(std::string_view name) {
  for (auto& t : tensors_)
    if (t->name == name) return *t;
  throw std::invalid_argument("no tensor named '" + std::string(name) + "'");
}

void QNetwork::check_input(const Eigen::MatrixXd& states) const {
  if (states.cols() != static_cast<Eigen::Index>(kFeatures) * cfg_.sequence_length)
    throw std::invalid_argument("state width " + std::to_string(states.cols()) + " does not match (" +
                                std::to_string(cfg_.sequence_length) + ", 8, 1)");
}

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  ad::Var y = ad::matmul(x, tape.leaf(*weight));
  return bias != nullptr ? ad::add_bias(y, tape.leaf(*bias)) : y;
}

namespace {

template <typename AddFn>
Linear make_dense(AddFn&& add, const std::string& name, int in, int out, Rng& rng, bool bias = true) {
  Linear l;
  l.weight = &add(name + ".weight", ad::xavier_uniform<double>(out, in, rng).transpose());
  if (bias) l.bias = &add(name + ".bias", Eigen::MatrixXd::Zero(1, out));
  return l;
}

ad::Var run_head(ad::Tape& tape, const std::vector<Linear>& layers, ad::Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// FFNN

FeedForwardNetwork::FeedForwardNetwork(NetworkConfig cfg) : QNetwork(std::move(cfg)) {
  Rng rng(mix_seed(config().seed, 1));
  auto add = [this](std::string n, Eigen::MatrixXd v) -> ad::Tensor& { return add_tensor(std::move(n), std::move(v)); };
  int in = kFeatures * config().sequence_length;
  for (std::size_t i = 0; i < config().hidden.size(); ++i) {
    layers_.push_back(make_dense(add, "ffnn." + std::to_string(i), in, config().hidden[i], rng));
    in = config().hidden[i];
  }
  layers_.push_back(make_dense(add, "ffnn.out", in, kOutputs, rng));
}

ad::Var FeedForwardNetwork::forward(ad::Tape& tape, const Eigen::MatrixXd& states) {
  check_input(states);
  return run_head(tape, layers_, tape.constant(states));
}

// ---------------------------------------------------------------------------
// FFNN-R

ReservoirNetwork::ReservoirNetwork(NetworkConfig cfg) : QNetwork(std::move(cfg)) {
  ReservoirWeights rw = init_reservoir(config().reservoir);
  w_ = std::move(rw.w);
  w_in_ = &add_tensor("reservoir.W_in", std::move(rw.w_in));
  Rng rng(mix_seed(config().seed, 2));
  auto add = [this](std::string n, Eigen::MatrixXd v) -> ad::Tensor& { return add_tensor(std::move(n), std::move(v)); };
  int in = config().reservoir.size;
  for (std::size_t i = 0; i < config().hidden.size(); ++i) {
    head_.push_back(make_dense(add, "head." + std::to_string(i), in, config().hidden[i], rng));
    in = config().hidden[i];
  }
  head_.push_back(make_dense(add, "head.out", in, kOutputs, rng));
}

ad::Var ReservoirNetwork::reservoir_state(ad::Tape& tape, const Eigen::MatrixXd& states) {
  check_input(states);
  ad::Var input = tape.constant(states);
  ad::Var w_in_t = ad::transpose(tape.leaf(*w_in_));
  ad::Var r;
  for (int t = 0; t < config().sequence_length; ++t) {
    ad::Var drive = ad::matmul(ad::slice_cols(input, kFeatures * t, kFeatures), w_in_t);
    if (t > 0) drive = ad::add(drive, ad::matmul_sparse_t(r, w_));
    r = ad::tanh(drive);
  }
  return r;
}

ad::Var ReservoirNetwork::forward(ad::Tape& tape, const Eigen::MatrixXd& states) {
  return run_head(tape, head_, reservoir_state(tape, states));
}

std::uint64_t ReservoirNetwork::reservoir_checksum() const {
  std::uint64_t h = fnv1a(w_.valuePtr(), static_cast<std::size_t>(w_.nonZeros()) * sizeof(double));
  h = fnv1a(w_.innerIndexPtr(), static_cast<std::size_t>(w_.nonZeros()) * sizeof(int), h);
  return fnv1a(w_.outerIndexPtr(), static_cast<std::size_t>(w_.outerSize() + 1) * sizeof(int), h);
}

void ReservoirNetwork::copy_frozen_from(const QNetwork& other) {
  const auto& src = dynamic_cast<const ReservoirNetwork&>(other);
  if (src.w_.rows() != w_.rows()) throw std::invalid_argument("clone_weights_from: reservoir size differs");
  w_ = src.w_;
}

void ReservoirNetwork::save_frozen(Checkpoint& ckpt, const std::string& prefix) const {
  Eigen::MatrixXd triplets(w_.nonZeros(), 3);
  Eigen::Index k = 0;
  for (int r = 0; r < w_.outerSize(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(w_, r); it; ++it, ++k) {
      triplets(k, 0) = static_cast<double>(it.row());
      triplets(k, 1) = static_cast<double>(it.col());
      triplets(k, 2) = it.value();
    }
  ckpt.add(prefix + "reservoir.W.triplets", triplets);
}

void ReservoirNetwork::load_frozen(const Checkpoint& ckpt, const std::string& prefix) {
  const Eigen::MatrixXd triplets = ckpt.require(prefix + "reservoir.W.triplets").to_matrix();
  if (triplets.size() > 0 && triplets.cols() != 3)
    throw CheckpointError("reservoir triplet record must have 3 columns");
  const int n = config().reservoir.size;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(triplets.rows()));
  for (Eigen::Index k = 0; k < triplets.rows(); ++k) {
    const auto r = static_cast<int>(triplets(k, 0));
    const auto c = static_cast<int>(triplets(k, 1));
    if (r < 0 || r >= n || c < 0 || c >= n) throw CheckpointError("reservoir triplet out of range");
    entries.emplace_back(r, c, triplets(k, 2));
  }
  w_.resize(n, n);
  w_.setFromTriplets(entries.begin(), entries.end());
  w_.makeCompressed();
}

// ---------------------------------------------------------------------------
// LSTM-OLH / LSTM-A

LstmNetwork::LstmNetwork(NetworkConfig cfg) : QNetwork(std::move(cfg)) {
  const AttentionConfig& ac = config().attention;
  if (ac.lstm_layers < 1) throw std::invalid_argument("LSTM needs at least one layer");
  if (ac.hidden < 1 || ac.heads < 1 || ac.hidden % ac.heads != 0)
    throw std::invalid_argument("attention hidden size must be divisible by the head count");
  const int d = ac.hidden;
  Rng rng(mix_seed(config().seed, 3));
  int in = kFeatures;
  for (int l = 0; l < ac.lstm_layers; ++l) {
    const std::string p = "lstm." + std::to_string(l);
    LstmLayer layer;
    layer.w_ih = &add_tensor(p + ".W_ih", ad::xavier_uniform<double>(4 * d, in, rng).transpose());
    layer.w_hh = &add_tensor(p + ".W_hh", ad::xavier_uniform<double>(4 * d, d, rng).transpose());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, 4 * d);
    b.middleCols(d, d).setConstant(ac.forget_bias);
    layer.b_ih = &add_tensor(p + ".b_ih", b);
    layer.b_hh = &add_tensor(p + ".b_hh", Eigen::MatrixXd::Zero(1, 4 * d));
    layers_.push_back(layer);
    in = d;
  }
  auto add = [this](std::string n, Eigen::MatrixXd v) -> ad::Tensor& { return add_tensor(std::move(n), std::move(v)); };
  if (has_attention()) {
    attention_.query = make_dense(add, "attn.q", d, d, rng, ac.qkv_bias);
    attention_.key = make_dense(add, "attn.k", d, d, rng, ac.qkv_bias);
    attention_.value = make_dense(add, "attn.v", d, d, rng, ac.qkv_bias);
    attention_.output = make_dense(add, "attn.out", d, d, rng);
  }
  out_ = make_dense(add, "out", d, kOutputs, rng);
}

std::vector<ad::Var> LstmNetwork::lstm_forward(ad::Tape& tape, const Eigen::MatrixXd& states) {
  check_input(states);
  const int n = config().sequence_length;
  const Eigen::Index d = config().attention.hidden;
  ad::Var input = tape.constant(states);
  std::vector<ad::Var> seq;
  seq.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) seq.push_back(ad::slice_cols(input, kFeatures * t, kFeatures));

  for (const LstmLayer& layer : layers_) {
    ad::Var w_ih = tape.leaf(*layer.w_ih);
    ad::Var w_hh = tape.leaf(*layer.w_hh);
    ad::Var b_ih = tape.leaf(*layer.b_ih);
    ad::Var b_hh = tape.leaf(*layer.b_hh);
    std::vector<ad::Var> out;
    out.reserve(seq.size());
    ad::Var h, c;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      ad::Var gates = ad::matmul(seq[t], w_ih);
      if (t > 0) gates = ad::add(gates, ad::matmul(h, w_hh));
      gates = ad::add_bias(ad::add_bias(gates, b_ih), b_hh);
      ad::Var sig = ad::sigmoid(gates);
      ad::Var i = ad::slice_cols(sig, 0, d);
      ad::Var f = ad::slice_cols(sig, d, d);
      ad::Var g = ad::tanh(ad::slice_cols(gates, 2 * d, d));
      ad::Var o = ad::slice_cols(sig, 3 * d, d);
      c = t > 0 ? ad::add(ad::mul(f, c), ad::mul(i, g)) : ad::mul(i, g);
      h = ad::mul(o, ad::tanh(c));
      out.push_back(h);
    }
    seq = std::move(out);
  }
  return seq;
}

AttentionResult LstmNetwork::multihead_attention(ad::Tape& tape, ad::Var hidden) {
  if (!has_attention()) throw std::logic_error("network has no attention block");
  const Eigen::Index d = config().attention.hidden;
  const int heads = config().attention.heads;
  const Eigen::Index dk = d / heads;
  if (hidden.cols() != d) throw std::invalid_argument("multihead_attention: hidden width mismatch");
  ad::Var q = attention_.query(tape, hidden);
  ad::Var k = attention_.key(tape, hidden);
  ad::Var v = attention_.value(tape, hidden);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  AttentionResult result;
  std::vector<ad::Var> per_head;
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dk, dk);
    ad::Var kh = ad::slice_cols(k, h * dk, dk);
    ad::Var vh = ad::slice_cols(v, h * dk, dk);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    result.weights.push_back(weights.value());
    per_head.push_back(ad::matmul(weights, vh));
  }
  result.output = attention_.output(tape, ad::concat_cols<double>(per_head));
  return result;
}

ad::Var LstmNetwork::last_row_attention(ad::Tape& tape, std::span<const ad::Var> hidden) {
  const Eigen::Index d = config().attention.hidden;
  const int heads = config().attention.heads;
  const Eigen::Index dk = d / heads;
  const auto n = static_cast<Eigen::Index>(hidden.size());
  const Eigen::Index batch = hidden.front().rows();
  // Keys and values for every row in one product over the (N*B, d) stack.
  ad::Var stacked = ad::concat_rows(hidden);
  ad::Var keys = attention_.key(tape, stacked);
  ad::Var values = attention_.value(tape, stacked);
  ad::Var query = attention_.query(tape, hidden.back());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<ad::Var> per_head;
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(query, h * dk, dk);
    ad::Var kh = ad::slice_cols(keys, h * dk, dk);
    ad::Var vh = ad::slice_cols(values, h * dk, dk);
    std::vector<ad::Var> scores;
    for (Eigen::Index t = 0; t < n; ++t)
      scores.push_back(ad::row_sum(ad::mul(qh, ad::slice_rows(kh, t * batch, batch))));
    ad::Var weights = ad::softmax_rows(ad::scale(ad::concat_cols<double>(scores), inv_sqrt));
    ad::Var mixed;
    for (Eigen::Index t = 0; t < n; ++t) {
      ad::Var term = ad::mul_col(ad::slice_rows(vh, t * batch, batch), ad::slice_cols(weights, t, 1));
      mixed = t == 0 ? term : ad::add(mixed, term);
    }
    per_head.push_back(mixed);
  }
  return attention_.output(tape, ad::concat_cols<double>(per_head));
}

ad::Var LstmNetwork::forward(ad::Tape& tape, const Eigen::MatrixXd& states) {
  std::vector<ad::Var> hidden = lstm_forward(tape, states);
  ad::Var last = has_attention() ? last_row_attention(tape, hidden) : hidden.back();
  return out_(tape, last);
}

ad::Var LstmNetwork::forward_reference(ad::Tape& tape, const StateTensor& state) {
  std::vector<ad::Var> hidden = lstm_forward(tape, state.flattened());
  ad::Var rows = ad::concat_rows<double>(hidden);
  ad::Var last;
  if (has_attention()) {
    AttentionResult att = multihead_attention(tape, rows);
    last = ad::slice_rows(att.output, rows.rows() - 1, 1);
  } else {
    last = ad::slice_rows(rows, rows.rows() - 1, 1);
  }
  return out_(tape, last);
}

std::vector<Eigen::MatrixXd> LstmNetwork::attention_weights(const StateTensor& state) {
  ad::Tape tape(false);
  std::vector<ad::Var> hidden = lstm_forward(tape, state.flattened());
  return multihead_attention(tape, ad::concat_rows<double>(hidden)).weights;
}

// ---------------------------------------------------------------------------

std::unique_ptr<QNetwork> make_network(const NetworkConfig& cfg) {
  if (cfg.sequence_length < 1) throw std::invalid_argument("network needs a positive sequence length");
  switch (cfg.architecture) {
    case Architecture::kFfnn: return std::make_unique<FeedForwardNetwork>(cfg);
    case Architecture::kFfnnR: return std::make_unique<ReservoirNetwork>(cfg);
    case Architecture::kLstmOlh:
    case Architecture::kLstmA: return std::make_unique<LstmNetwork>(cfg);
  }
  throw std::invalid_argument("unknown architecture");
}

std::unique_ptr<QNetwork> load_network(const Checkpoint& ckpt) {
  auto net = make_network(read_network_config(ckpt.descriptor));
  net->load(ckpt);
  return net;
}

}  // namespace hpfold
