#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "fatlab/errors.hpp"
#include "fatlab/mining.hpp"
#include "support/test_support.hpp"

using namespace fatlab;
using fatlab::testing::clustered_points;
using fatlab::testing::random_vector;

namespace {

ClusterStats cluster(Label l, double x, double y, double r = 0.0) {
  ClusterStats s;
  s.label = l;
  s.centroid = Vector(2);
  s.centroid << x, y;
  s.radius = r;
  s.members = 1;
  return s;
}

ClusterSet set_of(std::initializer_list<ClusterStats> cs) {
  ClusterSet out;
  for (const auto& c : cs) out[c.label] = c;
  return out;
}

const std::vector<NegativeStrategy> kStrategies{NegativeStrategy::kCtrdAll, NegativeStrategy::kCtrdAvg,
                                                NegativeStrategy::kCtrdHM, NegativeStrategy::kBatchNeg};

}  // namespace

TEST_CASE("negative strategies on a hand-made cluster set") {
  const ClusterSet cs = set_of({cluster(0, 0, 0), cluster(1, 2, 0, 0.5), cluster(2, 0, 4, 0.25)});
  const std::vector<Label> batch{0, 1, 2};
  const Vector anchor = Vector::Zero(2);

  const auto all = select_negatives(0, anchor, cs, batch, NegativeStrategy::kCtrdAll);
  REQUIRE(all.size() == 2);
  CHECK(all[0].label == 1);
  CHECK(all[1].label == 2);

  const auto avg = select_negatives(0, anchor, cs, batch, NegativeStrategy::kCtrdAvg);
  REQUIRE(avg.size() == 1);
  CHECK(avg[0].label == kSyntheticLabel);
  CHECK(avg[0].centroid(0) == 1.0);
  CHECK(avg[0].centroid(1) == 2.0);
  CHECK(avg[0].radius == 0.5);

  const auto hm = select_negatives(0, anchor, cs, batch, NegativeStrategy::kCtrdHM);
  REQUIRE(hm.size() == 1);
  CHECK(hm[0].label == 1);

  Vector near2(2);
  near2 << 0, 3.5;
  const auto bn = select_negatives(0, near2, cs, batch, NegativeStrategy::kBatchNeg);
  REQUIRE(bn.size() == 1);
  CHECK(bn[0].label == 2);
  // batchNeg only looks at identities present in the batch.
  const auto bn1 = select_negatives(0, near2, cs, std::vector<Label>{0, 1}, NegativeStrategy::kBatchNeg);
  CHECK(bn1[0].label == 1);
  CHECK_THROWS_AS(select_negatives(0, near2, cs, std::vector<Label>{0}, NegativeStrategy::kBatchNeg),
                  MissingClusterError);
}

TEST_CASE("argmin ties go to the lowest label") {
  const ClusterSet cs = set_of({cluster(0, 0, 0), cluster(3, 1, 0), cluster(5, -1, 0), cluster(7, 0, 1)});
  const std::vector<Label> batch{0, 3, 5, 7};
  CHECK(select_negatives(0, Vector::Zero(2), cs, batch, NegativeStrategy::kCtrdHM)[0].label == 3);
  CHECK(select_negatives(0, Vector::Zero(2), cs, batch, NegativeStrategy::kBatchNeg)[0].label == 3);
}

TEST_CASE("strategy properties on random cluster sets") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + trial % 8;
    const auto data = clustered_points(p, 3, 4, rng);
    const ClusterSet cs = compute_centroids(data.points, data.labels, CentroidOption::kMean);
    std::vector<Label> batch;
    for (int l = 0; l < p; ++l) batch.push_back(l);
    const Label anchor = trial % p;
    const Vector point = data.points.row(anchor * 3).transpose();

    for (auto s : kStrategies) {
      for (const auto& n : select_negatives(anchor, point, cs, batch, s)) CHECK(n.label != anchor);
    }

    // ctrdAvg is ctrdAll reduced by centroid mean and max radius.
    const auto all = select_negatives(anchor, point, cs, batch, NegativeStrategy::kCtrdAll);
    Vector mean = Vector::Zero(4);
    double rmax = 0;
    for (const auto& n : all) {
      mean += n.centroid;
      rmax = std::max(rmax, n.radius);
    }
    mean /= static_cast<double>(all.size());
    const auto avg = select_negatives(anchor, point, cs, batch, NegativeStrategy::kCtrdAvg)[0];
    CHECK((avg.centroid - mean).norm() < 1e-12);
    CHECK(avg.radius == rmax);

    // Uniform scaling leaves the argmin unchanged.
    const double scale = 0.1 + 5.0 * static_cast<double>(trial % 7);
    ClusterSet scaled = cs;
    for (auto& [_, st] : scaled) st.centroid *= scale;
    for (auto s : {NegativeStrategy::kCtrdHM, NegativeStrategy::kBatchNeg}) {
      CHECK(select_negatives(anchor, point, cs, batch, s)[0].label ==
            select_negatives(anchor, Vector(point * scale), scaled, batch, s)[0].label);
    }
  }
}

TEST_CASE("no eligible negative is an error") {
  const ClusterSet one = set_of({cluster(0, 0, 0)});
  for (auto s : kStrategies) {
    CHECK_THROWS_AS(select_negatives(0, Vector::Zero(2), one, std::vector<Label>{0}, s), MissingClusterError);
  }
  const ClusterSet other = set_of({cluster(1, 0, 0), cluster(2, 1, 0)});
  CHECK_THROWS_AS(select_negatives(0, Vector::Zero(2), other, std::vector<Label>{1, 2}, NegativeStrategy::kCtrdHM),
                  MissingClusterError);
}

TEST_CASE("strategy tags round trip; batchHM is batchNeg") {
  for (auto s : kStrategies) CHECK(parse_negative_strategy(to_string(s)) == s);
  CHECK(parse_negative_strategy("batchHM") == NegativeStrategy::kBatchNeg);
  CHECK_THROWS_AS(parse_negative_strategy("random"), ConfigError);
}

TEST_CASE("PK batches have the requested composition") {
  std::vector<Label> labels;
  for (int p = 0; p < 4; ++p)
    for (int k = 0; k < 4; ++k) labels.push_back(p);
  BatchSampler sampler(labels, {2, 2, 7});
  for (int epoch = 0; epoch < 5; ++epoch) {
    for (const auto& batch : sampler.next_epoch()) {
      REQUIRE(batch.size() == 4);
      std::map<Label, int> count;
      std::set<std::size_t> distinct(batch.begin(), batch.end());
      for (auto i : batch) ++count[labels[i]];
      CHECK(count.size() == 2);
      for (const auto& [_, c] : count) CHECK(c == 2);
      CHECK(distinct.size() == 4);
    }
  }
}

TEST_CASE("sampler is deterministic and covers every identity per epoch") {
  std::mt19937_64 rng(2);
  std::vector<Label> labels;
  for (int i = 0; i < 300; ++i) labels.push_back(static_cast<Label>(rng() % 23));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    BatchSampler a(labels, {5, 3, seed}), b(labels, {5, 3, seed});
    const std::set<Label> all(labels.begin(), labels.end());
    for (int epoch = 0; epoch < 4; ++epoch) {
      const auto ea = a.next_epoch();
      CHECK(ea == b.next_epoch());
      const std::size_t expect = std::max<std::size_t>((all.size() + 4) / 5, (labels.size() + 14) / 15);
      CHECK(ea.size() == expect);
      std::set<Label> seen;
      for (const auto& batch : ea)
        for (auto i : batch) seen.insert(labels[i]);
      CHECK(seen == all);
    }
  }
}

TEST_CASE("an identity with fewer than K_b samples repeats them") {
  const std::vector<Label> labels{0, 0, 0, 0, 1};
  BatchSampler sampler(labels, {2, 3, 1});
  for (const auto& batch : sampler.next_epoch()) {
    int ones = 0;
    for (auto i : batch) ones += labels[i] == 1;
    CHECK(ones == 3);
  }
}

TEST_CASE("subsets restrict sampling") {
  std::vector<Label> labels;
  for (int p = 0; p < 6; ++p)
    for (int k = 0; k < 5; ++k) labels.push_back(p);
  BatchSampler sampler(labels, {3, 2, 3});
  const std::vector<std::size_t> subset{0, 1, 5, 6, 10, 11, 15};
  sampler.set_subset(subset);
  CHECK(sampler.identity_count() == 4);
  const std::set<std::size_t> allowed(subset.begin(), subset.end());
  for (const auto& batch : sampler.next_epoch())
    for (auto i : batch) CHECK(allowed.contains(i));
  CHECK_THROWS_AS(sampler.set_subset(std::vector<std::size_t>{0, 5}), InvalidBatchError);
  CHECK_THROWS_AS(BatchSampler(std::vector<Label>{0, 0, 0}, {2, 2, 0}), InvalidBatchError);
  CHECK_THROWS_AS(BatchSampler(labels, {1, 2, 0}), ConfigError);
}
