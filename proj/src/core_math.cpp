#include "fatlab/core_math.hpp"

#include <cmath>
#include <string>

#include "fatlab/errors.hpp"

namespace fatlab {

double euclidean_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) {
    throw InvalidArgumentError("euclidean_distance: dimension mismatch (" +
                               std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  }
  return (u - v).norm();
}

Vector normalize(const Eigen::Ref<const Vector>& v) {
  const double n = v.norm();
  if (!(n > kNormEpsilon)) {
    throw DegenerateVectorError("normalize: vector norm " + std::to_string(n) +
                                " is below the zero-norm guard");
  }
  return v / n;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  if (logits.size() == 0) throw InvalidArgumentError("softmax: empty logits");
  if (!logits.allFinite()) throw InvalidArgumentError("softmax: non-finite logits");
  Vector out = (logits.array() - logits.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

double entropy(const Eigen::Ref<const Vector>& probabilities) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  // Rounding can leave -0.0 or a tiny negative for one-hot inputs.
  return h > 0.0 ? h : 0.0;
}

void check_probability_vector(const Eigen::Ref<const Vector>& p) {
  if (p.size() == 0) throw InvalidArgumentError("probability vector is empty");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      throw InvalidArgumentError("probability entry " + std::to_string(i) + " out of [0,1]");
    }
  }
  if (std::abs(p.sum() - 1.0) > 1e-9) {
    throw InvalidArgumentError("probability vector does not sum to one");
  }
}

Vector distance_gradient(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& c) {
  Vector diff = a - c;
  const double d = diff.norm();
  if (d == 0.0) return Vector::Zero(a.size());
  return diff / d;
}

}  // namespace fatlab
