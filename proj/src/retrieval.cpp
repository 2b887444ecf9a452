#include "tgq/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "tgq/blob.hpp"
#include "tgq/errors.hpp"

namespace tgq {

void EmbeddingSet::add(const std::string& id, std::span<const double> z) {
  if (dim_ == 0) dim_ = z.size();
  if (z.size() != dim_)
    throw DimensionError("embedding for " + id + " has " + std::to_string(z.size()) + " dims, expected " +
                         std::to_string(dim_));
  if (index_.contains(id)) throw ContractError("duplicate embedding id " + id);
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), z.begin(), z.end());
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::at(std::string_view id) const {
  auto i = find(id);
  if (!i) throw LookupError("no embedding for item " + std::string(id));
  return *i;
}

void EmbeddingSet::check_unit(double tol) const {
  for (std::size_t i = 0; i < size(); ++i) {
    double n = 0;
    for (double v : row(i)) n += v * v;
    if (std::abs(std::sqrt(n) - 1.0) > tol)
      throw NumericError("embedding " + ids_[i] + " is not unit-norm (norm " + std::to_string(std::sqrt(n)) + ")");
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void sort_ranked(std::vector<std::size_t>& idx, const std::vector<double>& score, const EmbeddingSet& pool) {
  const auto& ids = pool.ids();
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return ids[a] < ids[b];
  });
}

}  // namespace

std::vector<std::size_t> rank_naive(const EmbeddingSet& pool, std::span<const double> query,
                                    std::optional<std::string_view> self_id) {
  if (pool.size() == 0) throw ContractError("rank: empty pool");
  if (query.size() != pool.dim())
    throw DimensionError("query has " + std::to_string(query.size()) + " dims, pool has " + std::to_string(pool.dim()));
  std::vector<double> score(pool.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    score[i] = dot(query, pool.row(i));
    if (self_id && pool.ids()[i] == *self_id) continue;
    idx.push_back(i);
  }
  sort_ranked(idx, score, pool);
  return idx;
}

std::vector<std::vector<std::size_t>> rank_blocked(const EmbeddingSet& pool, const EmbeddingSet& queries,
                                                   bool exclude_self, std::size_t block) {
  if (pool.size() == 0) throw ContractError("rank: empty pool");
  if (queries.dim() != pool.dim() && queries.size() > 0)
    throw DimensionError("queries have " + std::to_string(queries.dim()) + " dims, pool has " +
                         std::to_string(pool.dim()));
  if (block == 0) block = 64;
  const std::size_t nq = queries.size(), np = pool.size(), d = pool.dim();
  std::vector<double> scores(nq * np);
  // tiles keep a block of query rows and pool rows hot; every dot product is
  // still accumulated in index order, so scores match the per-query loop bit for bit
  for (std::size_t q0 = 0; q0 < nq; q0 += block)
    for (std::size_t p0 = 0; p0 < np; p0 += block) {
      const std::size_t q1 = std::min(nq, q0 + block), p1 = std::min(np, p0 + block);
      for (std::size_t q = q0; q < q1; ++q) {
        const double* qa = queries.row(q).data();
        for (std::size_t p = p0; p < p1; ++p) {
          const double* pa = pool.row(p).data();
          double s = 0;
          for (std::size_t k = 0; k < d; ++k) s += qa[k] * pa[k];
          scores[q * np + p] = s;
        }
      }
    }
  std::vector<std::vector<std::size_t>> out(nq);
  std::vector<double> row(np);
  for (std::size_t q = 0; q < nq; ++q) {
    std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(q * np), np, row.begin());
    auto self = exclude_self ? pool.find(queries.ids()[q]) : std::nullopt;
    auto& idx = out[q];
    idx.reserve(np);
    for (std::size_t i = 0; i < np; ++i)
      if (!self || *self != i) idx.push_back(i);
    sort_ranked(idx, row, pool);
  }
  return out;
}

double HitReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return hit_rate[i];
  throw LookupError("report has no H@" + std::to_string(k));
}

std::size_t best_positive_rank(std::span<const std::size_t> ranked, const EmbeddingSet& pool,
                               const std::set<std::string>& positives) {
  for (std::size_t r = 0; r < ranked.size(); ++r)
    if (positives.contains(pool.ids()[ranked[r]])) return r + 1;
  return 0;
}

HitReport hit_rate(std::span<const std::string> query_ids, std::span<const std::size_t> best_ranks,
                   std::span<const std::size_t> ks) {
  if (best_ranks.empty()) throw ContractError("hit_rate: empty query set");
  if (query_ids.size() != best_ranks.size()) throw DimensionError("hit_rate: ids and ranks differ in length");
  HitReport r;
  r.ks.assign(ks.begin(), ks.end());
  std::sort(r.ks.begin(), r.ks.end());
  r.query_ids.assign(query_ids.begin(), query_ids.end());
  r.best_rank.assign(best_ranks.begin(), best_ranks.end());
  for (std::size_t k : r.ks) {
    std::size_t hits = 0;
    for (std::size_t rank : best_ranks)
      if (rank >= 1 && rank <= k) ++hits;
    r.hit_rate.push_back(static_cast<double>(hits) / static_cast<double>(best_ranks.size()));
  }
  return r;
}

std::vector<EvalQuery> queries_from_pairs(std::span<const IdPair> pairs) {
  std::vector<EvalQuery> out;
  std::map<std::string, std::size_t> pos;
  for (const auto& p : pairs) {
    auto [it, fresh] = pos.emplace(p.query_id, out.size());
    if (fresh) out.push_back({p.query_id, {}});
    out[it->second].positives.insert(p.target_id);
  }
  return out;
}

HitReport evaluate(const EmbeddingSet& pool, std::span<const EvalQuery> queries, std::span<const std::size_t> ks) {
  if (queries.empty()) throw ContractError("evaluate: empty query set");
  EmbeddingSet qset(pool.dim());
  for (const auto& q : queries) {
    for (const auto& p : q.positives) pool.at(p);
    qset.add(q.query_id, pool.row(pool.at(q.query_id)));
  }
  const auto ranked = rank_blocked(pool, qset, true);
  std::vector<std::string> ids;
  std::vector<std::size_t> best;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].positives.empty()) throw ContractError("query " + queries[i].query_id + " has no positives");
    ids.push_back(queries[i].query_id);
    best.push_back(best_positive_rank(ranked[i], pool, queries[i].positives));
  }
  return hit_rate(ids, best, ks);
}

void write_embeddings(const std::filesystem::path& prefix, const EmbeddingSet& set) {
  std::ofstream ids(prefix.string() + ".ids");
  if (!ids) throw IoError("cannot write " + prefix.string() + ".ids");
  for (const auto& id : set.ids()) ids << id << '\n';
  std::vector<double> all;
  for (std::size_t i = 0; i < set.size(); ++i) all.insert(all.end(), set.row(i).begin(), set.row(i).end());
  if (set.size() == 0) throw ContractError("write_embeddings: empty set");
  write_blob(prefix.string() + ".tgqt", Tensor::from({set.size(), set.dim()}, std::move(all)));
}

EmbeddingSet read_embeddings(const std::filesystem::path& prefix) {
  std::ifstream is(prefix.string() + ".ids");
  if (!is) throw IoError("cannot read " + prefix.string() + ".ids");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ids.push_back(line);
  const Tensor t = read_blob(prefix.string() + ".tgqt");
  if (t.rank() != 2 || t.rows() != ids.size())
    throw DimensionError("embedding blob " + shape_str(t.shape()) + " does not match " + std::to_string(ids.size()) +
                         " ids");
  // stored as f32: renormalise so rows are unit vectors in double precision
  EmbeddingSet set(t.cols());
  std::vector<double> row(t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double n = 0;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      row[j] = t.at(i, j);
      n += row[j] * row[j];
    }
    n = std::sqrt(n);
    if (n > 0)
      for (auto& v : row) v /= n;
    set.add(ids[i], row);
  }
  return set;
}

void write_hit_report(const std::filesystem::path& csv, const std::filesystem::path& tsv, const HitReport& r) {
  std::ofstream c(csv);
  if (!c) throw IoError("cannot write " + csv.string());
  c << "K,hit_rate\n";
  c.precision(10);
  for (std::size_t i = 0; i < r.ks.size(); ++i) c << r.ks[i] << ',' << r.hit_rate[i] << '\n';
  std::ofstream t(tsv);
  if (!t) throw IoError("cannot write " + tsv.string());
  t << "query_id\tbest_rank\n";
  for (std::size_t i = 0; i < r.query_ids.size(); ++i) t << r.query_ids[i] << '\t' << r.best_rank[i] << '\n';
}

std::string format_hit_table(const HitReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  for (std::size_t i = 0; i < r.ks.size(); ++i) os << "H@" << r.ks[i] << '\t' << r.hit_rate[i] << '\n';
  return os.str();
}

}  // namespace tgq
