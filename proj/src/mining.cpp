#include "fatlab/mining.hpp"

#include <algorithm>
#include <limits>

#include "fatlab/errors.hpp"

namespace fatlab {

std::string to_string(NegativeStrategy strategy) {
  switch (strategy) {
    case NegativeStrategy::kCtrdAll: return "ctrdAll";
    case NegativeStrategy::kCtrdAvg: return "ctrdAvg";
    case NegativeStrategy::kCtrdHM: return "ctrdHM";
    case NegativeStrategy::kBatchNeg: return "batchNeg";
  }
  return "ctrdAll";
}

NegativeStrategy parse_negative_strategy(const std::string& tag) {
  if (tag == "ctrdAll") return NegativeStrategy::kCtrdAll;
  if (tag == "ctrdAvg") return NegativeStrategy::kCtrdAvg;
  if (tag == "ctrdHM") return NegativeStrategy::kCtrdHM;
  if (tag == "batchNeg" || tag == "batchHM") return NegativeStrategy::kBatchNeg;
  throw ConfigError("unknown negative strategy '" + tag +
                    "' (expected ctrdAll | ctrdAvg | ctrdHM | batchNeg)");
}

namespace {

MissingClusterError no_negative(Label anchor) {
  return MissingClusterError("no eligible negative cluster for identity " + std::to_string(anchor));
}

// Nearest cluster to `point` among candidates (label order, strict < keeps the lowest label).
const ClusterStats* nearest(const Eigen::Ref<const Vector>& point,
                            const std::vector<const ClusterStats*>& candidates) {
  const ClusterStats* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto* c : candidates) {
    const double d = euclidean_distance(point, c->centroid);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

std::vector<ClusterStats> select_negatives(Label anchor_label,
                                           const Eigen::Ref<const Vector>& anchor_point,
                                           const ClusterSet& clusters,
                                           std::span<const Label> batch_labels,
                                           NegativeStrategy strategy) {
  std::vector<const ClusterStats*> candidates;
  if (strategy == NegativeStrategy::kBatchNeg) {
    std::vector<Label> present(batch_labels.begin(), batch_labels.end());
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (Label l : present) {
      if (l == anchor_label) continue;
      if (auto it = clusters.find(l); it != clusters.end()) candidates.push_back(&it->second);
    }
  } else {
    for (const auto& [label, stats] : clusters) {
      if (label != anchor_label) candidates.push_back(&stats);
    }
  }
  if (candidates.empty()) throw no_negative(anchor_label);

  switch (strategy) {
    case NegativeStrategy::kCtrdAll: {
      std::vector<ClusterStats> out;
      out.reserve(candidates.size());
      for (const auto* c : candidates) out.push_back(*c);
      return out;
    }
    case NegativeStrategy::kCtrdAvg: {
      ClusterStats avg;
      avg.label = kSyntheticLabel;
      avg.centroid = Vector::Zero(candidates.front()->centroid.size());
      for (const auto* c : candidates) {
        avg.centroid += c->centroid;
        avg.radius = std::max(avg.radius, c->radius);
        avg.members += c->members;
        avg.confident_members += c->confident_members;
      }
      avg.centroid /= static_cast<double>(candidates.size());
      return {avg};
    }
    case NegativeStrategy::kCtrdHM: {
      auto own = clusters.find(anchor_label);
      if (own == clusters.end()) {
        throw MissingClusterError("ctrdHM: anchor identity " + std::to_string(anchor_label) +
                                  " has no cluster");
      }
      return {*nearest(own->second.centroid, candidates)};
    }
    case NegativeStrategy::kBatchNeg:
      return {*nearest(anchor_point, candidates)};
  }
  throw no_negative(anchor_label);
}

void validate(const BatchSpec& spec) {
  if (spec.identities < 2) throw ConfigError("batch identities (P_b) must be >= 2");
  if (spec.per_identity < 1) throw ConfigError("batch per_identity (K_b) must be >= 1");
}

BatchSampler::BatchSampler(std::span<const Label> labels, BatchSpec spec)
    : labels_(labels.begin(), labels.end()), spec_(spec), rng_(spec.seed) {
  validate(spec_);
  set_subset({});
}

void BatchSampler::set_subset(std::span<const std::size_t> indices) {
  members_.clear();
  member_streams_.clear();
  identity_stream_.clear();
  if (indices.empty()) {
    for (std::size_t i = 0; i < labels_.size(); ++i) members_[labels_[i]].push_back(i);
    eligible_ = labels_.size();
  } else {
    for (std::size_t i : indices) {
      if (i >= labels_.size()) throw InvalidArgumentError("sampler subset index out of range");
      members_[labels_[i]].push_back(i);
    }
    eligible_ = indices.size();
  }
  if (members_.size() < static_cast<std::size_t>(spec_.identities)) {
    throw InvalidBatchError("sampler needs " + std::to_string(spec_.identities) +
                            " identities but only " + std::to_string(members_.size()) +
                            " are available");
  }
}

Label BatchSampler::next_identity(const std::vector<Label>& taken) {
  std::vector<Label> deferred;
  for (;;) {
    if (identity_stream_.empty()) {
      std::vector<Label> perm;
      for (const auto& [label, _] : members_) perm.push_back(label);
      std::shuffle(perm.begin(), perm.end(), rng_);
      identity_stream_.assign(perm.begin(), perm.end());
    }
    const Label l = identity_stream_.front();
    identity_stream_.pop_front();
    if (std::find(taken.begin(), taken.end(), l) == taken.end()) {
      for (auto it = deferred.rbegin(); it != deferred.rend(); ++it) identity_stream_.push_front(*it);
      return l;
    }
    deferred.push_back(l);
  }
}

std::size_t BatchSampler::next_member(Label label) {
  auto& stream = member_streams_[label];
  if (stream.empty()) {
    std::vector<std::size_t> perm = members_.at(label);
    std::shuffle(perm.begin(), perm.end(), rng_);
    stream.assign(perm.begin(), perm.end());
  }
  const std::size_t i = stream.front();
  stream.pop_front();
  return i;
}

std::vector<Batch> BatchSampler::next_epoch() {
  const std::size_t p = members_.size();
  const auto pb = static_cast<std::size_t>(spec_.identities);
  const auto kb = static_cast<std::size_t>(spec_.per_identity);
  const std::size_t count = std::max((p + pb - 1) / pb, (eligible_ + pb * kb - 1) / (pb * kb));
  std::vector<Batch> batches;
  batches.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<Label> taken;
    Batch batch;
    batch.reserve(pb * kb);
    for (std::size_t j = 0; j < pb; ++j) {
      const Label l = next_identity(taken);
      taken.push_back(l);
      for (std::size_t k = 0; k < kb; ++k) batch.push_back(next_member(l));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace fatlab
