#include "support.hpp"

#include "hpfold/ad/adam.hpp"
#include "hpfold/networks.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cstring>
#include <sstream>

using namespace hpfold;
using Eigen::MatrixXd;

namespace {

std::vector<StateTensor> random_states(int n, int count, Rng& rng) {
  std::vector<StateTensor> out;
  for (int k = 0; k < count; ++k) {
    const HPSequence s = hpfold::testing::random_sequence(static_cast<std::size_t>(n), rng);
    // Stop the rollout at a random depth so partial states are covered too.
    Conformation c(s);
    const auto depth = rng.uniform_int(static_cast<std::uint64_t>(n - 1));
    for (std::uint64_t d = 0; d < depth && !c.complete(); ++d) {
      const auto legal = legal_actions(c).to_vector();
      if (legal.empty()) break;
      c = apply_action(c, legal[rng.uniform_int(legal.size())]);
    }
    out.push_back(encode_state(c));
  }
  return out;
}

NetworkConfig small_config(Architecture a, int n, std::uint64_t seed) {
  NetworkConfig cfg = desk_preset(a, n, seed);
  cfg.attention.hidden = 8;
  cfg.attention.heads = 2;
  cfg.reservoir.size = 40;
  cfg.reservoir.connectivity = 0.2;
  cfg.hidden = {12, 8};
  return cfg;
}

double network_gradient_error(QNetwork& net, Rng& rng, int batch, int samples) {
  const MatrixXd states = stack_states(random_states(net.sequence_length(), batch, rng));
  MatrixXd w(batch, 5);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
  return hpfold::testing::gradient_check(
      net.parameters(),
      [&](ad::Tape& t) { return ad::sum(ad::mul(net.forward(t, states), t.constant(w))); }, rng,
      samples);
}

void zero_all(QNetwork& net) {
  for (auto* p : net.parameters()) p->value.setZero();
}

ad::Tensor& find(QNetwork& net, const std::string& name) {
  for (auto* p : net.parameters())
    if (p->name == name) return *p;
  throw std::invalid_argument(name);
}

}  // namespace

TEST_CASE("architecture names round trip") {
  for (Architecture a : kAllArchitectures) CHECK(architecture_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(architecture_from_string("cnn"), std::invalid_argument);
}

TEST_CASE("parameter counts of the benchmark configurations") {
  CHECK(make_network(paper_preset(Architecture::kLstmA, 20))->parameter_count() == 6324741);
  CHECK(make_network(paper_preset(Architecture::kLstmOlh, 20))->parameter_count() == 5274117);
  CHECK(make_network(paper_preset(Architecture::kLstmA, 48))->parameter_count() == 10527237);
  CHECK(make_network(paper_preset(Architecture::kFfnn, 27))->parameter_count() == 264445);
  // Reservoir variant: W_in (1000x8) plus the 1000-512-256-128-84-5 head.
  const std::size_t ffnn_r = 8000 + (1000 * 512 + 512) + (512 * 256 + 256) + (256 * 128 + 128) +
                             (128 * 84 + 84) + (84 * 5 + 5);
  CHECK(make_network(paper_preset(Architecture::kFfnnR, 27))->parameter_count() == ffnn_r);
}

TEST_CASE("every architecture maps a state to five finite values") {
  Rng rng(1);
  for (Architecture a : kAllArchitectures) {
    for (int n : {3, 7, 12}) {
      auto net = make_network(desk_preset(a, n, 5));
      for (const auto& s : random_states(n, 4, rng)) {
        const QValues q = net->q_values(s);
        for (double v : q) CHECK(std::isfinite(v));
      }
      const MatrixXd batch = net->q_values(stack_states(random_states(n, 3, rng)));
      CHECK(batch.rows() == 3);
      CHECK(batch.cols() == 5);
      CHECK_THROWS_AS(net->q_values(MatrixXd::Zero(1, 8 * n + 8)), std::invalid_argument);
    }
  }
}

TEST_CASE("all-zero weights give zero outputs") {
  Rng rng(2);
  const auto states = random_states(6, 3, rng);
  for (Architecture a : {Architecture::kFfnn, Architecture::kLstmOlh, Architecture::kLstmA}) {
    auto net = make_network(desk_preset(a, 6, 1));
    zero_all(*net);
    CHECK(net->q_values(stack_states(states)).isZero(0.0));
  }
  auto lstm = make_network(small_config(Architecture::kLstmOlh, 5, 3));
  zero_all(*lstm);
  ad::Tape t(false);
  for (const auto& h : dynamic_cast<LstmNetwork&>(*lstm).lstm_forward(t, stack_states(states).leftCols(40)))
    CHECK(h.value().isZero(0.0));
}

TEST_CASE("reservoir initialization") {
  ReservoirConfig dense;
  dense.size = 30;
  dense.connectivity = 1.0;
  CHECK(init_reservoir(dense).w.nonZeros() == 900);

  ReservoirConfig cfg;
  cfg.size = 1000;
  cfg.connectivity = 0.1;
  cfg.seed = 42;
  const ReservoirWeights a = init_reservoir(cfg);
  const double frac = static_cast<double>(a.w.nonZeros()) / 1e6;
  CHECK(frac >= 0.09);
  CHECK(frac <= 0.11);
  CHECK(a.w_in.rows() == 1000);
  CHECK(a.w_in.cols() == 8);
  const double bound = std::sqrt(6.0 / 2000.0);
  for (Eigen::Index k = 0; k < a.w.nonZeros(); ++k) CHECK(std::abs(a.w.valuePtr()[k]) <= bound);

  const ReservoirWeights b = init_reservoir(cfg);
  REQUIRE(a.w.nonZeros() == b.w.nonZeros());
  CHECK(std::memcmp(a.w.valuePtr(), b.w.valuePtr(), sizeof(double) * static_cast<std::size_t>(a.w.nonZeros())) == 0);
  CHECK(std::memcmp(a.w.innerIndexPtr(), b.w.innerIndexPtr(), sizeof(int) * static_cast<std::size_t>(a.w.nonZeros())) == 0);
  CHECK(a.w_in == b.w_in);

  cfg.spectral_radius = 0.9;
  cfg.size = 60;
  const MatrixXd scaled(init_reservoir(cfg).w);
  const double radius = Eigen::EigenSolver<MatrixXd>(scaled, false).eigenvalues().cwiseAbs().maxCoeff();
  CHECK(radius == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("reservoir recurrence") {
  Rng rng(3);
  NetworkConfig cfg = small_config(Architecture::kFfnnR, 1, 4);
  auto net = make_network(cfg);
  auto& res = dynamic_cast<ReservoirNetwork&>(*net);
  MatrixXd x0(1, 8);
  for (Eigen::Index i = 0; i < 8; ++i) x0(i) = rng.uniform(-1, 1);
  ad::Tape t(false);
  const MatrixXd r = res.reservoir_state(t, x0).value();
  const MatrixXd expect = (find(res, "reservoir.W_in").value * x0.transpose()).array().tanh().transpose();
  CHECK((r - expect).norm() < 1e-14);

  // Zero W and W_in: r(N-1) = 0, so the output is the head's image of 0.
  auto net6 = make_network(small_config(Architecture::kFfnnR, 6, 4));
  auto& res6 = dynamic_cast<ReservoirNetwork&>(*net6);
  res6.set_reservoir(Eigen::SparseMatrix<double, Eigen::RowMajor>(40, 40));
  find(res6, "reservoir.W_in").value.setZero();
  MatrixXd x = MatrixXd::Zero(1, 40);
  x = (x * find(res6, "head.0.weight").value).rowwise() + find(res6, "head.0.bias").value.row(0);
  x = x.cwiseMax(0.0);
  x = (x * find(res6, "head.1.weight").value).rowwise() + find(res6, "head.1.bias").value.row(0);
  x = x.cwiseMax(0.0);
  x = (x * find(res6, "head.out.weight").value).rowwise() + find(res6, "head.out.bias").value.row(0);
  const MatrixXd q = res6.q_values(stack_states(random_states(6, 2, rng)));
  CHECK((q.row(0) - x).norm() < 1e-14);
  CHECK((q.row(1) - x).norm() < 1e-14);
}

TEST_CASE("reservoir stays frozen while training") {
  Rng rng(4);
  auto net = make_network(desk_preset(Architecture::kFfnnR, 8, 9));
  auto& res = dynamic_cast<ReservoirNetwork&>(*net);
  for (auto* p : net->parameters()) CHECK(p->name != "reservoir.W");
  const std::uint64_t w_before = res.reservoir_checksum();
  const MatrixXd w_in_before = find(res, "reservoir.W_in").value;
  const std::uint64_t head_before = net->parameter_checksum();
  ad::AdamState adam;
  auto params = net->parameters();
  for (int step = 0; step < 200; ++step) {
    const MatrixXd states = stack_states(random_states(8, 4, rng));
    for (auto* p : params) p->clear_grad();
    ad::Tape t;
    ad::Var loss = ad::mse(net->forward(t, states), t.constant(MatrixXd::Constant(4, 5, 1.0)));
    t.backward(loss);
    ad::adam_step(params, adam);
  }
  CHECK(res.reservoir_checksum() == w_before);
  CHECK(find(res, "reservoir.W_in").value != w_in_before);
  CHECK(net->parameter_checksum() != head_before);
}

TEST_CASE("end-to-end gradients match finite differences") {
  Rng rng(5);
  for (Architecture a : kAllArchitectures) {
    for (int trial = 0; trial < 3; ++trial) {
      auto net = make_network(small_config(a, 4, 10 + trial));
      CAPTURE(to_string(a));
      CHECK(network_gradient_error(*net, rng, 3, 4) < 1e-4);
    }
  }
  auto desk = make_network(desk_preset(Architecture::kFfnn, 6, 1));
  CHECK(network_gradient_error(*desk, rng, 2, 4) < 1e-4);
}

TEST_CASE("attention mechanics") {
  Rng rng(6);
  NetworkConfig cfg = small_config(Architecture::kLstmA, 5, 7);
  auto net = make_network(cfg);
  auto& lstm = dynamic_cast<LstmNetwork&>(*net);

  for (int trial = 0; trial < 50; ++trial) {
    for (const MatrixXd& w : lstm.attention_weights(random_states(5, 1, rng)[0])) {
      CHECK(w.rows() == 5);
      CHECK(w.cols() == 5);
      for (Eigen::Index r = 0; r < 5; ++r) CHECK(std::abs(w.row(r).sum() - 1.0) < 1e-9);
    }
  }
  CHECK(lstm.attention_weights(random_states(5, 1, rng)[0]).size() == 2);

  // Zero query/key projections: uniform weights, output is the mean of V.
  for (auto* name : {"attn.q.weight", "attn.q.bias", "attn.k.weight", "attn.k.bias"})
    find(lstm, name).value.setZero();
  MatrixXd h(5, 8);
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = rng.uniform(-1, 1);
  ad::Tape t(false);
  const AttentionResult att = lstm.multihead_attention(t, t.constant(h));
  for (const MatrixXd& w : att.weights) CHECK((w.array() - 0.2).abs().maxCoeff() < 1e-15);
  const MatrixXd v = (h * find(lstm, "attn.v.weight").value).rowwise() + find(lstm, "attn.v.bias").value.row(0);
  const Eigen::RowVectorXd mean_v = v.colwise().mean();
  const Eigen::RowVectorXd expect =
      mean_v * find(lstm, "attn.out.weight").value + find(lstm, "attn.out.bias").value.row(0);
  for (Eigen::Index r = 0; r < 5; ++r) CHECK((att.output.value().row(r) - expect).norm() < 1e-12);

  // Permuting rows 0..N-2 does not move the last output row.
  MatrixXd permuted = h;
  permuted.row(0) = h.row(3);
  permuted.row(3) = h.row(1);
  permuted.row(1) = h.row(0);
  const AttentionResult att2 = lstm.multihead_attention(t, t.constant(permuted));
  CHECK((att2.output.value().row(4) - att.output.value().row(4)).norm() < 1e-12);
}

TEST_CASE("single-row attention is V times W_O") {
  NetworkConfig cfg = small_config(Architecture::kLstmA, 1, 8);
  cfg.attention.heads = 1;
  auto net = make_network(cfg);
  auto& lstm = dynamic_cast<LstmNetwork&>(*net);
  Rng rng(7);
  MatrixXd h(1, 8);
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = rng.uniform(-1, 1);
  ad::Tape t(false);
  const AttentionResult att = lstm.multihead_attention(t, t.constant(h));
  const MatrixXd v = (h * find(lstm, "attn.v.weight").value).rowwise() + find(lstm, "attn.v.bias").value.row(0);
  const MatrixXd expect = (v * find(lstm, "attn.out.weight").value).rowwise() + find(lstm, "attn.out.bias").value.row(0);
  CHECK(att.weights.front()(0, 0) == 1.0);
  CHECK((att.output.value() - expect).norm() < 1e-14);
}

TEST_CASE("batched attention agrees with the full reference path") {
  Rng rng(8);
  auto net = make_network(small_config(Architecture::kLstmA, 6, 9));
  auto& lstm = dynamic_cast<LstmNetwork&>(*net);
  const auto states = random_states(6, 5, rng);
  const MatrixXd batched = lstm.q_values(stack_states(states));
  for (std::size_t b = 0; b < states.size(); ++b) {
    ad::Tape t(false);
    const MatrixXd ref = lstm.forward_reference(t, states[b]).value();
    CHECK((batched.row(static_cast<Eigen::Index>(b)) - ref).norm() < 1e-12);
  }
}

TEST_CASE("last-hidden-state readout equals attention configured as identity") {
  NetworkConfig a_cfg = small_config(Architecture::kLstmA, 1, 11);
  a_cfg.attention.heads = 1;
  NetworkConfig o_cfg = a_cfg;
  o_cfg.architecture = Architecture::kLstmOlh;
  auto a = make_network(a_cfg);
  auto o = make_network(o_cfg);
  for (auto* p : o->parameters()) find(*a, p->name).value = p->value;
  find(*a, "attn.v.weight").value.setIdentity();
  find(*a, "attn.v.bias").value.setZero();
  find(*a, "attn.out.weight").value.setIdentity();
  find(*a, "attn.out.bias").value.setZero();
  Rng rng(12);
  MatrixXd states(5, 8);
  for (Eigen::Index i = 0; i < states.size(); ++i) states(i) = rng.uniform(-1, 1);
  const MatrixXd qa = a->q_values(states);
  const MatrixXd qo = o->q_values(states);
  CHECK((qa - qo).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention needs hidden divisible by heads") {
  NetworkConfig cfg = small_config(Architecture::kLstmA, 4, 1);
  cfg.attention.heads = 3;
  CHECK_THROWS_AS(make_network(cfg), std::invalid_argument);
}

TEST_CASE("weights clone, save and load exactly") {
  Rng rng(13);
  for (Architecture a : kAllArchitectures) {
    auto net = make_network(desk_preset(a, 7, 21));
    auto twin = net->clone();
    CHECK(twin->parameter_checksum() == net->parameter_checksum());
    const MatrixXd states = stack_states(random_states(7, 4, rng));
    CHECK(twin->q_values(states) == net->q_values(states));

    Checkpoint ck;
    net->save(ck);
    std::stringstream ss;
    write_checkpoint(ss, ck);
    auto loaded = load_network(read_checkpoint(ss));
    CHECK(loaded->architecture() == a);
    CHECK(loaded->parameter_checksum() == net->parameter_checksum());
    CHECK(loaded->q_values(states) == net->q_values(states));
    if (a == Architecture::kFfnnR)
      CHECK(dynamic_cast<ReservoirNetwork&>(*loaded).reservoir_checksum() ==
            dynamic_cast<ReservoirNetwork&>(*net).reservoir_checksum());
  }
  auto f = make_network(desk_preset(Architecture::kFfnn, 7, 1));
  auto l = make_network(desk_preset(Architecture::kLstmA, 7, 1));
  CHECK_THROWS_AS(f->clone_weights_from(*l), std::invalid_argument);
  auto f8 = make_network(desk_preset(Architecture::kFfnn, 8, 1));
  CHECK_THROWS_AS(f->clone_weights_from(*f8), std::invalid_argument);
}

TEST_CASE("network config descriptor round trip") {
  NetworkConfig cfg = paper_preset(Architecture::kFfnnR, 48, 77);
  cfg.reservoir.spectral_radius = 0.95;
  Descriptor d;
  write_descriptor(cfg, d);
  const NetworkConfig back = read_network_config(d);
  CHECK(back.architecture == cfg.architecture);
  CHECK(back.sequence_length == 48);
  CHECK(back.hidden == cfg.hidden);
  CHECK(back.reservoir.size == 3000);
  CHECK(back.reservoir.seed == cfg.reservoir.seed);
  CHECK(back.reservoir.spectral_radius == 0.95);
  CHECK(back.attention.lstm_layers == 5);
  CHECK(back.seed == 77);
}
