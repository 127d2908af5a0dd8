#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "fatlab/dataset.hpp"
#include "fatlab/model.hpp"

namespace fatlab {

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double top10 = 0.0;
  double mean_ap = 0.0;
  std::size_t queries = 0;  // queries with at least one gallery match
  std::size_t skipped = 0;  // queries without any gallery match
};

nlohmann::json to_json(const EvalReport& report);

/// Ranks the gallery by ascending Euclidean distance per query (ties by
/// gallery index). top-k counts a hit if any of the k nearest shares the
/// query label. AP is the mean of precision at each match rank; mAP averages
/// over queries that have a match.
EvalReport evaluate_retrieval(const RowMatrix& query, std::span<const Label> query_labels,
                              const RowMatrix& gallery, std::span<const Label> gallery_labels);

/// Embeds both sets with `net` and evaluates with their reference labels.
EvalReport evaluate_model(const Network& net, const Dataset& query, const Dataset& gallery);

/// Direct transfer: splits `target` into query/gallery with split_holdout and
/// evaluates without retraining.
EvalReport evaluate_transfer(const Network& net, const Dataset& target, int queries_per_identity);

/// P K (K-1) (P K - K): anchor-positive-negative triplets over P identities of K samples.
std::uint64_t count_triplets_vanilla(std::uint64_t identities, std::uint64_t per_identity);

/// P K (P K - 1) + P K: pairwise distances plus one hardest pick per anchor.
std::uint64_t count_pairs_hard_mining(std::uint64_t identities, std::uint64_t per_identity);

}  // namespace fatlab
