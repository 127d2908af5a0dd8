#pragma once

#include <Eigen/Dense>

namespace fatlab {

using Label = int;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// One sample per row. Embeddings, inputs, logits and their gradients all use it.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Norms at or below this are treated as zero.
inline constexpr double kNormEpsilon = 1e-12;

double euclidean_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

/// Returns v / ||v||. Throws DegenerateVectorError when ||v|| <= kNormEpsilon.
Vector normalize(const Eigen::Ref<const Vector>& v);

/// Max-subtracted softmax. Throws InvalidArgumentError on non-finite logits.
Vector softmax(const Eigen::Ref<const Vector>& logits);

/// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(const Eigen::Ref<const Vector>& probabilities);

/// Throws InvalidArgumentError unless p is a probability vector (entries in
/// [0,1], sum within 1e-9 of one).
void check_probability_vector(const Eigen::Ref<const Vector>& p);

/// Gradient of ||a - c|| with respect to a. Zero when a == c.
Vector distance_gradient(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& c);

}  // namespace fatlab
