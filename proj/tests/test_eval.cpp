#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "fatlab/distill.hpp"
#include "fatlab/errors.hpp"
#include "fatlab/eval.hpp"
#include "support/test_support.hpp"

using namespace fatlab;
using namespace fatlab::testing;

namespace {

RowMatrix line(std::initializer_list<double> xs) {
  RowMatrix m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index r = 0;
  for (double x : xs) m(r++, 0) = x;
  return m;
}

void check_same(const EvalReport& a, const EvalReport& b) {
  CHECK(a.top1 == b.top1);
  CHECK(a.top5 == b.top5);
  CHECK(a.top10 == b.top10);
  CHECK(a.mean_ap == doctest::Approx(b.mean_ap).epsilon(1e-15));
  CHECK(a.queries == b.queries);
  CHECK(a.skipped == b.skipped);
}

}  // namespace

TEST_CASE("single matching neighbour") {
  const EvalReport r = evaluate_retrieval(line({0}), std::vector<Label>{1}, line({0.1, 5, 6, 7}),
                                          std::vector<Label>{1, 0, 0, 2});
  CHECK(r.top1 == 1.0);
  CHECK(r.mean_ap == 1.0);
  CHECK(r.queries == 1);
}

TEST_CASE("AP over ranks [wrong, match, wrong, match]") {
  const EvalReport r =
      evaluate_retrieval(line({0}), std::vector<Label>{1}, line({1, 2, 3, 4}), std::vector<Label>{0, 1, 0, 1});
  CHECK(r.mean_ap == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.top1 == 0.0);
  CHECK(r.top5 == 1.0);
}

TEST_CASE("distance ties are broken by gallery index") {
  // Both gallery items sit at distance 1; the wrong one has the lower index.
  const EvalReport r = evaluate_retrieval(line({0}), std::vector<Label>{1}, line({1, -1}), std::vector<Label>{0, 1});
  CHECK(r.top1 == 0.0);
  CHECK(r.mean_ap == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("queries without a gallery match are skipped and counted") {
  const EvalReport r = evaluate_retrieval(line({0, 1}), std::vector<Label>{1, 7}, line({0.5, 3}),
                                          std::vector<Label>{1, 0});
  CHECK(r.queries == 1);
  CHECK(r.skipped == 1);
  CHECK(r.top1 == 1.0);
  CHECK_THROWS_AS(evaluate_retrieval(line({0}), std::vector<Label>{1}, RowMatrix(0, 1), std::vector<Label>{}),
                  InvalidArgumentError);
}

TEST_CASE("retrieval equals the brute-force oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const RowMatrix q = random_matrix(30, 4, rng), g = random_matrix(200, 4, rng);
    std::vector<Label> ql(30), gl(200);
    for (auto& l : ql) l = static_cast<Label>(rng() % 12);
    for (auto& l : gl) l = static_cast<Label>(rng() % 10);
    check_same(evaluate_retrieval(q, ql, g, gl), brute_force_retrieval(q, ql, g, gl));
  }
  // Quantized coordinates force many exact distance ties.
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix q = random_matrix(30, 2, rng), g = random_matrix(200, 2, rng);
    q = q.array().round();
    g = g.array().round();
    std::vector<Label> ql(30), gl(200);
    for (auto& l : ql) l = static_cast<Label>(rng() % 5);
    for (auto& l : gl) l = static_cast<Label>(rng() % 5);
    check_same(evaluate_retrieval(q, ql, g, gl), brute_force_retrieval(q, ql, g, gl));
  }
}

TEST_CASE("retrieval is invariant under common positive rescaling") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const RowMatrix q = random_matrix(20, 3, rng), g = random_matrix(80, 3, rng);
    std::vector<Label> ql(20), gl(80);
    for (auto& l : ql) l = static_cast<Label>(rng() % 6);
    for (auto& l : gl) l = static_cast<Label>(rng() % 6);
    const EvalReport base = evaluate_retrieval(q, ql, g, gl);
    for (double s : {0.25, 2.0, 8.0}) check_same(base, evaluate_retrieval(s * q, ql, s * g, gl));
  }
}

TEST_CASE("transfer evaluation") {
  SyntheticSpec spec;
  spec.seed = 5;
  const Dataset d = generate_synthetic_dataset(spec);
  const Network net = make_network({Architecture::kOneHidden, d.input_dim(), 16, 8, d.num_classes}, 5);
  const HoldoutSplit split = split_holdout(d, 2);
  check_same(evaluate_transfer(net, d, 2), evaluate_model(net, split.query, split.train));
  check_same(evaluate_transfer(net, d, 2), evaluate_transfer(net, d, 2));

  spec.input_dim = 7;
  const Dataset other = generate_synthetic_dataset(spec);
  CHECK_THROWS_AS(evaluate_transfer(net, other, 2), InvalidArgumentError);
}

TEST_CASE("evaluation uses clean labels when they are known") {
  SyntheticSpec spec;
  spec.seed = 6;
  spec.separation = 50;
  NoiseSpec noise;
  noise.flip_rate = 0.5;
  const NoisyDataset noisy = inject_noise(generate_synthetic_dataset(spec), noise);
  Network id;
  id.embedding = EmbeddingModel::identity(noisy.data.input_dim());
  std::mt19937_64 rng(1);
  id.classifier = ClassifierHead::init(noisy.data.input_dim(), noisy.data.num_classes, rng);
  const HoldoutSplit split = split_holdout(noisy.data, 2);
  CHECK(evaluate_model(id, split.query, split.train).top1 == 1.0);
}

TEST_CASE("triplet and pair counts") {
  CHECK(count_triplets_vanilla(2, 2) == 8);
  for (std::uint64_t k = 1; k <= 6; ++k) CHECK(count_triplets_vanilla(1, k) == 0);
  for (std::uint64_t p = 1; p <= 6; ++p) CHECK(count_triplets_vanilla(p, 1) == 0);
  for (int p = 1; p <= 5; ++p) {
    for (int k = 1; k <= 5; ++k) {
      std::vector<Label> labels;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < k; ++j) labels.push_back(i);
      CHECK(count_triplets_vanilla(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(k)) ==
            enumerate_triplets(labels).size());
    }
  }
  CHECK(count_pairs_hard_mining(2, 2) == 16);
  CHECK(count_pairs_hard_mining(1, 1) == 1);
  const double r64 = static_cast<double>(count_pairs_hard_mining(128, 4)) / static_cast<double>(count_pairs_hard_mining(64, 4));
  const double r128 = static_cast<double>(count_pairs_hard_mining(256, 4)) / static_cast<double>(count_pairs_hard_mining(128, 4));
  CHECK(std::abs(r64 - 4.0) < 1e-12);
  CHECK(std::abs(r128 - 4.0) < 1e-12);
}

TEST_CASE("report JSON keys") {
  EvalReport r;
  r.top1 = 0.5;
  r.mean_ap = 0.25;
  r.queries = 4;
  const auto j = to_json(r);
  CHECK(j.at("top1") == 0.5);
  CHECK(j.at("mAP") == 0.25);
  CHECK(j.at("queries") == 4);
}
