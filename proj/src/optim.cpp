#include "divnet/optim.hpp"

#include <cmath>

#include "divnet/errors.hpp"

namespace divnet {

void Adam::step(std::span<Tensor> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw ContractViolation("Adam::step: parameter list changed between steps");
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto w = p.mutable_data();
    auto g = p.mutable_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != w.size()) throw ContractViolation("Adam::step: parameter shape changed");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
      g[i] = 0.0;
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != v.size()) throw IntegrityError("Adam state: moment lists differ in length");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace divnet
