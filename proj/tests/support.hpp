#pragma once

#include "hpfold/ad/tape.hpp"
#include "hpfold/lattice.hpp"
#include "hpfold/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

namespace hpfold::testing {

// Upper-tail p-value of Pearson's statistic for observed vs expected counts.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline HPSequence random_sequence(std::size_t n, Rng& rng, double h_fraction = 0.5) {
  std::vector<Residue> r(n);
  for (auto& x : r) x = rng.bernoulli(h_fraction) ? Residue::H : Residue::P;
  return HPSequence(std::move(r));
}

// Uniformly random legal moves until the walk completes or traps.
inline Conformation random_rollout(const HPSequence& seq, Rng& rng) {
  Conformation c(seq);
  while (!c.complete()) {
    const auto legal = legal_actions(c).to_vector();
    if (legal.empty()) break;
    c = apply_action(c, legal[static_cast<std::size_t>(rng.uniform_int(legal.size()))]);
  }
  return c;
}

// The 48 signed axis permutations of the cube.
inline std::vector<Eigen::Matrix3i> cube_symmetries() {
  std::vector<Eigen::Matrix3i> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    for (int signs = 0; signs < 8; ++signs) {
      Eigen::Matrix3i m = Eigen::Matrix3i::Zero();
      for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r) & 1 ? -1 : 1;
      out.push_back(m);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
}

// Central differences on `samples` random coordinates of each tensor, compared
// to the analytic gradient from one backward pass. Returns the max relative
// error seen.
inline double gradient_check(const std::vector<ad::Tensor*>& params,
                             const std::function<ad::Var(ad::Tape&)>& loss, Rng& rng,
                             int samples = 6, double h = 1e-5) {
  for (auto* p : params) p->clear_grad();
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Eigen::MatrixXd> analytic;
  for (auto* p : params)
    analytic.push_back(p->has_grad() ? p->grad : Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));

  auto eval = [&] {
    ad::Tape tape(false);
    return loss(tape).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    for (int s = 0; s < samples; ++s) {
      const auto i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(v.size())));
      const double saved = v(i);
      v(i) = saved + h;
      const double up = eval();
      v(i) = saved - h;
      const double down = eval();
      v(i) = saved;
      worst = std::max(worst, rel_error(analytic[k](i), (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hpfold_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace hpfold::testing
