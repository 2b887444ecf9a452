#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tgq/corpus.hpp"

namespace tgq {

/// N x dim row-major matrix of unit vectors keyed by item id.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::size_t dim) : dim_(dim) {}

  void add(const std::string& id, std::span<const double> z);
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::optional<std::size_t> find(std::string_view id) const;
  /// LookupError when the id is missing.
  std::size_t at(std::string_view id) const;
  /// NumericError naming the first row whose norm is off by more than `tol`.
  void check_unit(double tol = 1e-6) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Ranks every pool row by dot product with `query` (descending, ties by
/// ascending id), skipping the row whose id equals `self_id`.
std::vector<std::size_t> rank_naive(const EmbeddingSet& pool, std::span<const double> query,
                                    std::optional<std::string_view> self_id = std::nullopt);

/// Same ranking for many queries, computed tile by tile. Produces exactly the
/// sequences of rank_naive.
std::vector<std::vector<std::size_t>> rank_blocked(const EmbeddingSet& pool, const EmbeddingSet& queries,
                                                   bool exclude_self = true, std::size_t block = 64);

struct HitReport {
  std::vector<std::size_t> ks;
  std::vector<double> hit_rate;           // parallel to ks
  std::vector<std::string> query_ids;
  std::vector<std::size_t> best_rank;     // 1-based, parallel to query_ids
  double at(std::size_t k) const;
};

/// Rank (1-based) of the best-placed positive in `ranked`; 0 when none occurs.
std::size_t best_positive_rank(std::span<const std::size_t> ranked, const EmbeddingSet& pool,
                               const std::set<std::string>& positives);

/// Fraction of queries whose best rank is within K, for every K.
HitReport hit_rate(std::span<const std::string> query_ids, std::span<const std::size_t> best_ranks,
                   std::span<const std::size_t> ks);

struct EvalQuery {
  std::string query_id;
  std::set<std::string> positives;
};

/// Groups pairs by query: each query carries the set of its targets.
std::vector<EvalQuery> queries_from_pairs(std::span<const IdPair> pairs);

/// Full-pool evaluation; query embeddings are looked up in `pool`.
HitReport evaluate(const EmbeddingSet& pool, std::span<const EvalQuery> queries, std::span<const std::size_t> ks);

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10, 20, 50, 100};

// ---- files -----------------------------------------------------------------

/// <prefix>.ids (one id per line) and <prefix>.tgqt (N x dim).
void write_embeddings(const std::filesystem::path& prefix, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& prefix);
/// `K,hit_rate` CSV and `query_id<TAB>best_rank` TSV.
void write_hit_report(const std::filesystem::path& csv, const std::filesystem::path& tsv, const HitReport& r);
std::string format_hit_table(const HitReport& r);

}  // namespace tgq
