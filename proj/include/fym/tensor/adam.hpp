#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fym/tensor/tape.hpp"

namespace fym::tensor {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror the parameter shapes of the store it was built for.
class Adam {
 public:
  Adam(const ParamStore& store, AdamOptions options = {}) : options_(options) {
    if (!(options.learning_rate > 0.0) || !(options.beta1 >= 0.0 && options.beta1 < 1.0) ||
        !(options.beta2 >= 0.0 && options.beta2 < 1.0) || !(options.epsilon > 0.0)) {
      throw std::invalid_argument("adam: invalid hyperparameters");
    }
    first_.reserve(store.size());
    second_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      first_.push_back(Array::zeros_like(store.value(i)));
      second_.push_back(Array::zeros_like(store.value(i)));
    }
  }

  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adam: learning rate must be positive");
    options_.learning_rate = lr;
  }
  std::int64_t step_count() const noexcept { return steps_; }
  const Array& first_moment(std::size_t id) const { return first_.at(id); }
  const Array& second_moment(std::size_t id) const { return second_.at(id); }

  /// Applies one update. A non-finite or mis-shaped gradient rejects the whole step, leaving
  /// parameters and optimizer state untouched.
  void step(ParamStore& store, const GradMap& grads) {
    if (grads.size() != store.size() || store.size() != first_.size()) {
      throw std::invalid_argument("adam: gradient count does not match parameter count");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].same_shape(store.value(i))) {
        throw std::invalid_argument("adam: gradient shape " + shape_string(grads[i].shape()) + " for parameter '" +
                                    store.name(i) + "' of shape " + shape_string(store.value(i).shape()));
      }
      if (!grads[i].all_finite()) {
        throw std::invalid_argument("adam: non-finite gradient for parameter '" + store.name(i) + "'");
      }
    }
    ++steps_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Array& p = store.value(i);
      Array& m = first_[i];
      Array& v = second_[i];
      const Array& g = grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        p[j] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
    }
  }

 private:
  AdamOptions options_;
  std::vector<Array> first_;
  std::vector<Array> second_;
  std::int64_t steps_ = 0;
};

}  // namespace fym::tensor
