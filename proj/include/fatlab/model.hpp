#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fatlab/core_math.hpp"

namespace fatlab {

enum class Architecture { kLinear, kOneHidden };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& tag);

/// Fully connected layer, weight is (out x in).
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

/// The embedding function f_E: either one affine map or affine -> tanh -> affine.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(Architecture arch, std::vector<DenseLayer> layers);

  static EmbeddingModel linear(int input_dim, int embedding_dim, std::mt19937_64& rng);
  static EmbeddingModel one_hidden(int input_dim, int hidden_dim, int embedding_dim,
                                   std::mt19937_64& rng);
  /// Square linear model with W = I and zero bias.
  static EmbeddingModel identity(int dim);

  Architecture architecture() const { return arch_; }
  int input_dim() const;
  int embedding_dim() const;
  int hidden_dim() const;  // 0 for linear

  Vector embed(const Eigen::Ref<const Vector>& x) const;
  RowMatrix forward(const RowMatrix& inputs) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

 private:
  Architecture arch_ = Architecture::kLinear;
  std::vector<DenseLayer> layers_;
};

/// Linear map from embeddings to class logits; weight is (C x d_emb).
struct ClassifierHead {
  Matrix weight;
  Vector bias;

  static ClassifierHead init(int embedding_dim, int num_classes, std::mt19937_64& rng);
  int num_classes() const { return static_cast<int>(weight.rows()); }
};

struct Network {
  EmbeddingModel embedding;
  ClassifierHead classifier;

  int input_dim() const { return embedding.input_dim(); }
  int embedding_dim() const { return embedding.embedding_dim(); }
  int num_classes() const { return classifier.num_classes(); }
};

struct NetworkSpec {
  Architecture architecture = Architecture::kOneHidden;
  int input_dim = 32;
  int hidden_dim = 32;
  int embedding_dim = 16;
  int num_classes = 2;
};

Network make_network(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardCache {
  RowMatrix inputs;
  RowMatrix hidden;  // tanh activations; empty for the linear architecture
  RowMatrix embeddings;
  RowMatrix logits;
};

ForwardCache forward_batch(const Network& net, const RowMatrix& inputs);

struct LayerGradient {
  Matrix weight;
  Vector bias;
};

/// Gradients mirroring Network's parameter shapes plus the input gradient.
struct GradientBundle {
  std::vector<LayerGradient> embedding;
  LayerGradient classifier;
  RowMatrix input;

  static GradientBundle zeros_like(const Network& net, Eigen::Index batch_rows);
  GradientBundle& operator+=(const GradientBundle& other);
  bool all_finite() const;
};

/// Chain-rule gradients for upstream gradients on the embeddings and/or the
/// logits. An upstream matrix with zero rows counts as all-zero. With
/// threads > 1 the batch is split into contiguous chunks whose partial
/// gradients are summed in chunk order.
GradientBundle backward(const Network& net, const ForwardCache& cache,
                        const RowMatrix& grad_embeddings, const RowMatrix& grad_logits,
                        int threads = 1);
GradientBundle backward(const Network& net, const RowMatrix& inputs,
                        const RowMatrix& grad_embeddings, const RowMatrix& grad_logits,
                        int threads = 1);

/// theta <- theta - lr * g. lr == 0 leaves the network untouched.
/// Throws TrainingDivergenceError on non-finite gradients.
void sgd_step(Network& net, const GradientBundle& grads, double lr);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Checkpoint files are JSON documents: format tag, version, architecture,
/// dimensions, and row-major parameter arrays. Doubles round-trip exactly.
void save_checkpoint(const Network& net, const std::string& path, const nlohmann::json& config);
Network load_checkpoint(const std::string& path);

}  // namespace fatlab
