#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "batlas/atlas.hpp"
#include "batlas/consensus.hpp"
#include "batlas/dataset.hpp"

namespace batlas {

struct Stats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
  std::size_t n = 0;
};
Stats summarize(std::span<const double> values);

// Counts STAPLE runs whose posterior or rater estimates leave their ranges.
struct StapleAudit {
  std::size_t runs = 0;
  std::size_t violations = 0;
};
bool staple_in_range(const ConsensusResult& r);

// STAPLE of every case's own user segments, in case order.
std::vector<BinaryMask> case_consensus(const Dataset& dataset, const StapleParams& params = {},
                                       int threads = 0, StapleAudit* audit = nullptr);

struct MaaReport {
  std::vector<std::string> ids;
  std::vector<double> jaccard;  // J(C*, G) per case
  Stats stats;
};
// `consensus` (optional) must come from case_consensus on the same dataset.
MaaReport compute_maa(const Dataset& dataset, const std::vector<BinaryMask>* consensus = nullptr,
                      int threads = 0);

struct LooRow {
  std::string query_id;
  std::string best_id;
  std::size_t best_index = 0;
  double similarity = 0.0;
  double jaccard = 0.0;  // NaN when the query has no gold
  double search_seconds = 0.0;
};

struct LooReport {
  std::string method;
  std::size_t n_images = 0;
  int n_users = 0;
  std::vector<LooRow> rows;
  Stats jaccard;
  Stats search_seconds;
  std::vector<BinaryMask> consensus;  // C_q per query, row order
};

struct LooOptions {
  int threads = 0;
  bool timed = false;  // one search in flight at a time
  StapleParams staple;
};

// The atlas must be built from `dataset` in case order. With `consensus`
// from case_consensus, the retrieved entry's STAPLE is looked up instead of
// recomputed (it is the same computation).
LooReport loo_consensus(const Dataset& dataset, const Atlas& atlas, const LooOptions& options = {},
                        const std::vector<BinaryMask>* consensus = nullptr);

struct UserError {
  int user = 0;  // 0-based
  Stats error;   // of |J(G, S_j) - J(C, S_j)|
};
struct UserErrorReport {
  std::vector<UserError> users;
  Stats grand;  // over the per-user means
};
UserErrorReport user_error_report(const Dataset& dataset, std::span<const BinaryMask> loo_consensus);

// Band edges 85/80/70/60/50 (percent) map to 'A'..'F'.
char expertise_band(double jaccard);
struct UserGroup {
  int user = 0;
  double mean_jaccard = 0.0;  // J(G, S_j) over all cases
  char band = 'F';
};
std::vector<UserGroup> group_users(const Dataset& dataset);

struct SubgroupResult {
  std::vector<int> users;  // 0-based
  std::size_t n_images = 0;
  Stats jaccard;
};
SubgroupResult subgroup_consensus_experiment(const Dataset& dataset, const BarcodeParams& params,
                                             std::span<const int> users, std::size_t n_images,
                                             const LooOptions& options = {});

// "3,9,11" with 1-based ids -> 0-based.
std::vector<int> parse_user_list(const std::string& text);
std::string format_user_list(std::span<const int> users);

void write_loo_csv(const std::filesystem::path& path, const LooReport& report);
void write_maa_csv(const std::filesystem::path& path, const MaaReport& report);
void write_users_csv(const std::filesystem::path& path, const UserErrorReport& report);
void write_subgroup_csv(const std::filesystem::path& path, std::span<const SubgroupResult> results);

}  // namespace batlas
