#include "fatlab/model.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <utility>

#include <nlohmann/json.hpp>

#include "fatlab/errors.hpp"

namespace fatlab {

namespace {

constexpr int kCheckpointVersion = 1;

DenseLayer init_layer(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseLayer layer{Matrix(out, in), Vector(out)};
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
  }
  for (int r = 0; r < out; ++r) layer.bias[r] = dist(rng);
  return layer;
}

void check_finite(const DenseLayer& layer) {
  if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
    throw InvalidArgumentError("model parameters must be finite");
  }
}

// Adds bias to every row of out.
void add_bias(RowMatrix& out, const Vector& bias) { out.rowwise() += bias.transpose(); }

}  // namespace

std::string to_string(Architecture arch) {
  return arch == Architecture::kLinear ? "linear" : "one-hidden";
}

Architecture parse_architecture(const std::string& tag) {
  if (tag == "linear") return Architecture::kLinear;
  if (tag == "one-hidden") return Architecture::kOneHidden;
  throw ConfigError("unknown architecture '" + tag + "' (expected linear | one-hidden)");
}

EmbeddingModel::EmbeddingModel(Architecture arch, std::vector<DenseLayer> layers)
    : arch_(arch), layers_(std::move(layers)) {
  const std::size_t expected = arch_ == Architecture::kLinear ? 1 : 2;
  if (layers_.size() != expected) {
    throw InvalidArgumentError("architecture " + to_string(arch_) + " expects " +
                               std::to_string(expected) + " layers");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0 || l.bias.size() != l.weight.rows()) {
      throw InvalidArgumentError("layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols()) {
      throw InvalidArgumentError("layer dimensions do not chain");
    }
    check_finite(l);
  }
}

EmbeddingModel EmbeddingModel::linear(int input_dim, int embedding_dim, std::mt19937_64& rng) {
  if (input_dim <= 0 || embedding_dim <= 0) throw InvalidArgumentError("dimensions must be positive");
  std::vector<DenseLayer> layers;
  layers.push_back(init_layer(input_dim, embedding_dim, rng));
  return EmbeddingModel(Architecture::kLinear, std::move(layers));
}

EmbeddingModel EmbeddingModel::one_hidden(int input_dim, int hidden_dim, int embedding_dim,
                                          std::mt19937_64& rng) {
  if (input_dim <= 0 || hidden_dim <= 0 || embedding_dim <= 0) {
    throw InvalidArgumentError("dimensions must be positive");
  }
  std::vector<DenseLayer> layers;
  layers.push_back(init_layer(input_dim, hidden_dim, rng));
  layers.push_back(init_layer(hidden_dim, embedding_dim, rng));
  return EmbeddingModel(Architecture::kOneHidden, std::move(layers));
}

EmbeddingModel EmbeddingModel::identity(int dim) {
  std::vector<DenseLayer> layers;
  layers.push_back(DenseLayer{Matrix::Identity(dim, dim), Vector::Zero(dim)});
  return EmbeddingModel(Architecture::kLinear, std::move(layers));
}

int EmbeddingModel::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int EmbeddingModel::embedding_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

int EmbeddingModel::hidden_dim() const {
  return arch_ == Architecture::kOneHidden ? static_cast<int>(layers_.front().weight.rows()) : 0;
}

Vector EmbeddingModel::embed(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != input_dim()) {
    throw InvalidArgumentError("forward: input has dimension " + std::to_string(x.size()) +
                               ", model expects " + std::to_string(input_dim()));
  }
  Vector h = layers_[0].weight * x + layers_[0].bias;
  if (arch_ == Architecture::kLinear) return h;
  h = h.array().tanh().matrix();
  return layers_[1].weight * h + layers_[1].bias;
}

RowMatrix EmbeddingModel::forward(const RowMatrix& inputs) const {
  if (inputs.rows() > 0 && inputs.cols() != input_dim()) {
    throw InvalidArgumentError("forward: input has dimension " + std::to_string(inputs.cols()) +
                               ", model expects " + std::to_string(input_dim()));
  }
  RowMatrix h = inputs * layers_[0].weight.transpose();
  add_bias(h, layers_[0].bias);
  if (arch_ == Architecture::kLinear) return h;
  h = h.array().tanh().matrix();
  RowMatrix out = h * layers_[1].weight.transpose();
  add_bias(out, layers_[1].bias);
  return out;
}

ClassifierHead ClassifierHead::init(int embedding_dim, int num_classes, std::mt19937_64& rng) {
  if (num_classes < 2) throw InvalidArgumentError("classifier needs at least 2 classes");
  DenseLayer l = init_layer(embedding_dim, num_classes, rng);
  return ClassifierHead{std::move(l.weight), std::move(l.bias)};
}

Network make_network(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net;
  net.embedding = spec.architecture == Architecture::kLinear
                      ? EmbeddingModel::linear(spec.input_dim, spec.embedding_dim, rng)
                      : EmbeddingModel::one_hidden(spec.input_dim, spec.hidden_dim,
                                                   spec.embedding_dim, rng);
  net.classifier = ClassifierHead::init(spec.embedding_dim, spec.num_classes, rng);
  return net;
}

ForwardCache forward_batch(const Network& net, const RowMatrix& inputs) {
  const auto& layers = net.embedding.layers();
  if (inputs.rows() > 0 && inputs.cols() != net.input_dim()) {
    throw InvalidArgumentError("forward: input has dimension " + std::to_string(inputs.cols()) +
                               ", model expects " + std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.inputs = inputs;
  RowMatrix first = inputs * layers[0].weight.transpose();
  add_bias(first, layers[0].bias);
  if (net.embedding.architecture() == Architecture::kLinear) {
    cache.embeddings = std::move(first);
  } else {
    cache.hidden = first.array().tanh().matrix();
    cache.embeddings = cache.hidden * layers[1].weight.transpose();
    add_bias(cache.embeddings, layers[1].bias);
  }
  cache.logits = cache.embeddings * net.classifier.weight.transpose();
  add_bias(cache.logits, net.classifier.bias);
  return cache;
}

GradientBundle GradientBundle::zeros_like(const Network& net, Eigen::Index batch_rows) {
  GradientBundle g;
  for (const auto& l : net.embedding.layers()) {
    g.embedding.push_back(
        LayerGradient{Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  g.classifier = LayerGradient{Matrix::Zero(net.classifier.weight.rows(), net.classifier.weight.cols()),
                               Vector::Zero(net.classifier.bias.size())};
  g.input = RowMatrix::Zero(batch_rows, net.input_dim());
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    embedding[i].weight += other.embedding[i].weight;
    embedding[i].bias += other.embedding[i].bias;
  }
  classifier.weight += other.classifier.weight;
  classifier.bias += other.classifier.bias;
  return *this;
}

bool GradientBundle::all_finite() const {
  for (const auto& l : embedding) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return classifier.weight.allFinite() && classifier.bias.allFinite();
}

namespace {

GradientBundle backward_rows(const Network& net, const ForwardCache& cache,
                             const RowMatrix& grad_embeddings, const RowMatrix& grad_logits,
                             Eigen::Index begin, Eigen::Index count) {
  const auto& layers = net.embedding.layers();
  GradientBundle g = GradientBundle::zeros_like(net, count);
  const int d_emb = net.embedding_dim();

  RowMatrix g_emb = RowMatrix::Zero(count, d_emb);
  if (grad_embeddings.rows() > 0) g_emb = grad_embeddings.middleRows(begin, count);
  if (grad_logits.rows() > 0) {
    const auto gl = grad_logits.middleRows(begin, count);
    g.classifier.weight = gl.transpose() * cache.embeddings.middleRows(begin, count);
    g.classifier.bias = gl.colwise().sum().transpose();
    g_emb += gl * net.classifier.weight;
  }

  const auto inputs = cache.inputs.middleRows(begin, count);
  if (net.embedding.architecture() == Architecture::kLinear) {
    g.embedding[0].weight = g_emb.transpose() * inputs;
    g.embedding[0].bias = g_emb.colwise().sum().transpose();
    g.input = g_emb * layers[0].weight;
    return g;
  }
  const auto hidden = cache.hidden.middleRows(begin, count);
  g.embedding[1].weight = g_emb.transpose() * hidden;
  g.embedding[1].bias = g_emb.colwise().sum().transpose();
  RowMatrix g_hidden = g_emb * layers[1].weight;
  g_hidden.array() *= (1.0 - hidden.array().square());
  g.embedding[0].weight = g_hidden.transpose() * inputs;
  g.embedding[0].bias = g_hidden.colwise().sum().transpose();
  g.input = g_hidden * layers[0].weight;
  return g;
}

}  // namespace

GradientBundle backward(const Network& net, const ForwardCache& cache,
                        const RowMatrix& grad_embeddings, const RowMatrix& grad_logits,
                        int threads) {
  const Eigen::Index n = cache.inputs.rows();
  if (grad_embeddings.rows() != 0 &&
      (grad_embeddings.rows() != n || grad_embeddings.cols() != net.embedding_dim())) {
    throw InvalidArgumentError("backward: embedding gradient shape mismatch");
  }
  if (grad_logits.rows() != 0 &&
      (grad_logits.rows() != n || grad_logits.cols() != net.num_classes())) {
    throw InvalidArgumentError("backward: logit gradient shape mismatch");
  }
  if (threads <= 1 || n < 2) return backward_rows(net, cache, grad_embeddings, grad_logits, 0, n);

  const Eigen::Index chunks = std::min<Eigen::Index>(threads, n);
  std::vector<std::future<GradientBundle>> parts;
  std::vector<Eigen::Index> starts;
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = n * c / chunks;
    const Eigen::Index end = n * (c + 1) / chunks;
    starts.push_back(begin);
    parts.push_back(std::async(std::launch::async, [&, begin, end] {
      return backward_rows(net, cache, grad_embeddings, grad_logits, begin, end - begin);
    }));
  }
  GradientBundle total = GradientBundle::zeros_like(net, n);
  for (Eigen::Index c = 0; c < chunks; ++c) {
    GradientBundle part = parts[c].get();
    total += part;
    total.input.middleRows(starts[c], part.input.rows()) = part.input;
  }
  return total;
}

GradientBundle backward(const Network& net, const RowMatrix& inputs,
                        const RowMatrix& grad_embeddings, const RowMatrix& grad_logits,
                        int threads) {
  return backward(net, forward_batch(net, inputs), grad_embeddings, grad_logits, threads);
}

void sgd_step(Network& net, const GradientBundle& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgumentError("learning rate must be >= 0");
  if (!grads.all_finite()) throw TrainingDivergenceError("non-finite gradient in sgd_step");
  auto& layers = net.embedding.layers();
  if (grads.embedding.size() != layers.size()) {
    throw InvalidArgumentError("gradient bundle does not match the network");
  }
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight -= lr * grads.embedding[i].weight;
    layers[i].bias -= lr * grads.embedding[i].bias;
  }
  net.classifier.weight -= lr * grads.classifier.weight;
  net.classifier.bias -= lr * grads.classifier.bias;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw IoError("checkpoint matrix has " + std::to_string(flat.size()) + " entries, expected " +
                  std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.embedding.layers()) {
    layers.push_back({{"weight", matrix_json(l.weight)}, {"bias", vector_json(l.bias)}});
  }
  return {
      {"format", "fatlab-checkpoint"},
      {"version", kCheckpointVersion},
      {"architecture", to_string(net.embedding.architecture())},
      {"input_dim", net.input_dim()},
      {"hidden_dim", net.embedding.hidden_dim()},
      {"embedding_dim", net.embedding_dim()},
      {"num_classes", net.num_classes()},
      {"layers", layers},
      {"classifier",
       {{"weight", matrix_json(net.classifier.weight)}, {"bias", vector_json(net.classifier.bias)}}},
  };
}

Network network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "fatlab-checkpoint") throw IoError("not a fatlab checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version " + j.at("version").dump());
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back(DenseLayer{matrix_from_json(l.at("weight")), vector_from_json(l.at("bias"))});
    }
    Network net;
    net.embedding = EmbeddingModel(parse_architecture(j.at("architecture").get<std::string>()),
                                   std::move(layers));
    const auto& c = j.at("classifier");
    net.classifier = ClassifierHead{matrix_from_json(c.at("weight")), vector_from_json(c.at("bias"))};
    if (net.classifier.weight.cols() != net.embedding_dim() ||
        net.classifier.bias.size() != net.classifier.weight.rows() || net.num_classes() < 2) {
      throw IoError("checkpoint classifier shape does not match the embedding model");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  } catch (const InvalidArgumentError& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Network& net, const std::string& path, const nlohmann::json& config) {
  nlohmann::json j = network_to_json(net);
  j["config"] = config;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << '\n';
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return network_from_json(j);
}

}  // namespace fatlab
