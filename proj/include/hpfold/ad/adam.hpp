#pragma once

#include "hpfold/ad/tape.hpp"
#include "hpfold/rng.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace hpfold::ad {

template <typename Scalar>
struct BasicAdamState {
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  long step_count = 0;
  Scalar lr = Scalar(0.001);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

using AdamState = BasicAdamState<double>;

// One bias-corrected Adam update over `params`, then zeroes their grads.
// Moments are sized on the first call and must match afterwards.
template <typename Scalar>
void adam_step(std::span<BasicTensor<Scalar>* const> params, BasicAdamState<Scalar>& state) {
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const auto* p : params) {
      state.first_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: parameter list does not match optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad())
      throw std::invalid_argument("adam_step: missing gradient for '" + params[i]->name + "'");
    if (state.first_moment[i].rows() != params[i]->value.rows() ||
        state.first_moment[i].cols() != params[i]->value.cols())
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + params[i]->name + "'");
  }

  ++state.step_count;
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.step_count));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<Scalar>& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (Scalar(1) - state.beta1) * p.grad;
    v = state.beta2 * v + (Scalar(1) - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    p.grad.setZero();
  }
}

template <typename Scalar>
void adam_step(std::vector<BasicTensor<Scalar>*>& params, BasicAdamState<Scalar>& state) {
  adam_step(std::span<BasicTensor<Scalar>* const>(params.data(), params.size()), state);
}

// Xavier/Glorot uniform for a (fan_out x fan_in) weight: U(-b, b) with
// b = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar = double>
Matrix<Scalar> xavier_uniform(Index fan_out, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<Scalar> w(fan_out, fan_in);
  for (Index c = 0; c < w.cols(); ++c)
    for (Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace hpfold::ad
