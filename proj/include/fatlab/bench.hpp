#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fatlab {

enum class BenchLoss { kTripletBatchAll, kTripletBatchHard, kFat };

std::string to_string(BenchLoss loss);
BenchLoss parse_bench_loss(const std::string& tag);

struct BenchSpec {
  BenchLoss loss = BenchLoss::kFat;
  std::vector<std::size_t> sizes;  // N values, strictly increasing
  int repeats = 5;
  std::uint64_t seed = 0;
  int per_identity = 8;    // K; N = P * K grows through P
  int embedding_dim = 16;
  double margin = 1.0;
  int group_identities = 16;  // FAT: identities per hard-negative search group
};

struct BenchPoint {
  std::size_t n = 0;
  double mean_ns = 0.0;
  double std_ns = 0.0;
  std::size_t inner_repeats = 1;
};

struct BenchReport {
  BenchLoss loss = BenchLoss::kFat;
  std::vector<BenchPoint> points;
  double slope = 0.0;  // least-squares slope of ln(time) against ln(N)
  std::vector<std::string> warnings;
};

/// Least-squares slope of ln(y) on ln(x).
double fit_loglog_slope(std::span<const double> x, std::span<const double> y);

/// Times one full loss evaluation over N clustered embeddings per size.
///
/// FAT covers the centroid/radius refresh plus every anchor's point-to-set
/// term against a single ctrdHM negative, searched within consecutive groups
/// of `group_identities` clusters (the batch a training step would see).
/// Triplet variants evaluate batch-all or batch-hard over all N samples.
/// Runs single-threaded with a warm-up pass; sizes under 100 us per call get
/// an inner repeat loop and a warning.
BenchReport benchmark_loss_scaling(const BenchSpec& spec);

nlohmann::json to_json(const BenchReport& report);
/// Delimited table: N,mean_ns,std_ns, preceded by a `# config:` line when
/// `config` is not null.
void save_bench_table(const BenchReport& report, const std::string& path, const nlohmann::json& config);

}  // namespace fatlab
