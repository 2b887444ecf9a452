#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "tgq/errors.hpp"
#include "tgq/retrieval.hpp"
#include "tgq/rng.hpp"

using namespace tgq;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

EmbeddingSet random_pool(std::size_t n, std::size_t dim, std::uint64_t seed, std::size_t dups = 0) {
  Rng rng(seed);
  EmbeddingSet set(dim);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    if (i < dups * 2 && i % 2 == 1) v = rows[i - 1];
    else
      for (auto& x : v) x = rng.normal();
    rows.push_back(unit(v));
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", (i * 7919) % n);
    set.add(id, rows.back());
  }
  return set;
}

std::vector<std::string> ids_of(const EmbeddingSet& pool, const std::vector<std::size_t>& ranked) {
  std::vector<std::string> out;
  for (auto i : ranked) out.push_back(pool.ids()[i]);
  return out;
}

}  // namespace

TEST_CASE("three-item pool ranks by cosine") {
  EmbeddingSet pool(2);
  pool.add("a", std::vector<double>{1, 0});
  pool.add("b", std::vector<double>{0, 1});
  pool.add("c", std::vector<double>{-1, 0});
  const std::vector<double> q{1, 0};
  CHECK(ids_of(pool, rank_naive(pool, q)) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("ties are broken by ascending id") {
  EmbeddingSet pool(2);
  pool.add("zeta", std::vector<double>{0, 1});
  pool.add("alpha", std::vector<double>{0, 1});
  pool.add("mid", std::vector<double>{1, 0});
  CHECK(ids_of(pool, rank_naive(pool, std::vector<double>{0, 1})) ==
        std::vector<std::string>{"alpha", "zeta", "mid"});
}

TEST_CASE("a query excludes its own row") {
  EmbeddingSet pool(2);
  pool.add("a", std::vector<double>{1, 0});
  pool.add("b", std::vector<double>{0, 1});
  CHECK(ids_of(pool, rank_naive(pool, pool.row(0), std::string_view("a"))) == std::vector<std::string>{"b"});
}

TEST_CASE("blocked scorer reproduces the naive loop exactly") {
  const auto pool = random_pool(1000, 64, 77, 40);
  const auto blocked = rank_blocked(pool, pool, true, 64);
  REQUIRE(blocked.size() == pool.size());
  for (std::size_t q = 0; q < pool.size(); ++q) {
    const auto naive = rank_naive(pool, pool.row(q), pool.ids()[q]);
    REQUIRE(naive == blocked[q]);
  }
}

TEST_CASE("ranking is independent of pool storage order") {
  const auto pool = random_pool(200, 8, 3, 10);
  EmbeddingSet rev(8);
  for (std::size_t i = pool.size(); i-- > 0;) rev.add(pool.ids()[i], pool.row(i));
  for (std::size_t q = 0; q < 20; ++q) {
    const auto a = ids_of(pool, rank_naive(pool, pool.row(q)));
    const auto b = ids_of(rev, rank_naive(rev, pool.row(q)));
    CHECK(a == b);
  }
}

TEST_CASE("shared rotation leaves rankings unchanged") {
  const auto pool = random_pool(100, 2, 9);
  const double th = 0.7, c = std::cos(th), s = std::sin(th);
  EmbeddingSet rot(2);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto r = pool.row(i);
    rot.add(pool.ids()[i], std::vector<double>{c * r[0] - s * r[1], s * r[0] + c * r[1]});
  }
  // a rotation can reorder near-ties through rounding, so compare scores, not just ids
  for (std::size_t q = 0; q < 10; ++q) {
    const auto a = rank_naive(pool, pool.row(q), pool.ids()[q]);
    const auto b = rank_naive(rot, rot.row(q), rot.ids()[q]);
    for (std::size_t k = 0; k < a.size(); ++k) {
      double sa = 0, sb = 0;
      for (int j = 0; j < 2; ++j) {
        sa += pool.row(q)[j] * pool.row(a[k])[j];
        sb += pool.row(q)[j] * pool.row(b[k])[j];
      }
      CHECK(std::abs(sa - sb) < 1e-12);
    }
  }
}

TEST_CASE("hit rate examples") {
  const std::vector<std::size_t> ks{1, 5, 10};
  const std::vector<std::string> q1{"q"};
  SUBCASE("positive ranked second") {
    const auto r = hit_rate(q1, std::vector<std::size_t>{2}, ks);
    CHECK(r.at(1) == 0.0);
    CHECK(r.at(5) == 1.0);
  }
  SUBCASE("best of two positives") {
    EmbeddingSet pool(1);
    std::vector<std::size_t> ranked;
    for (int i = 0; i < 100; ++i) {
      pool.add("i" + std::to_string(i), std::vector<double>{1});
      ranked.push_back(i);
    }
    const auto best = best_positive_rank(ranked, pool, {"i6", "i89"});
    CHECK(best == 7);
    CHECK(hit_rate(q1, std::vector<std::size_t>{best}, ks).at(10) == 1.0);
  }
  SUBCASE("all first") {
    const std::vector<std::string> qs{"a", "b"};
    const auto r = hit_rate(qs, std::vector<std::size_t>{1, 1}, ks);
    for (double h : r.hit_rate) CHECK(h == 1.0);
  }
  CHECK_THROWS_AS(hit_rate({}, {}, ks), ContractError);
}

TEST_CASE("H@K is monotone in K") {
  const auto pool = random_pool(300, 16, 5);
  std::vector<EvalQuery> queries;
  for (std::size_t i = 0; i < 60; ++i) queries.push_back({pool.ids()[i], {pool.ids()[299 - i], pool.ids()[150 + i]}});
  const auto r = evaluate(pool, queries, kDefaultKs);
  for (std::size_t i = 1; i < r.hit_rate.size(); ++i) CHECK(r.hit_rate[i] >= r.hit_rate[i - 1]);
}

TEST_CASE("toy pool evaluation matches hand computation") {
  EmbeddingSet pool(2);
  pool.add("a", unit({1, 0}));
  pool.add("b", unit({1, 0.1}));
  pool.add("c", unit({-1, 0}));
  // a: b first; b: a first; c: ranks b (cos -0.995) above a (-1), so a sits at 2
  const std::vector<IdPair> pairs{{"a", "b"}, {"b", "a"}, {"c", "a"}};
  const auto r = evaluate(pool, queries_from_pairs(pairs), std::vector<std::size_t>{1, 2});
  CHECK(r.at(1) == doctest::Approx(2.0 / 3.0));
  CHECK(r.at(2) == 1.0);
}

TEST_CASE("unknown query ids raise a lookup error") {
  EmbeddingSet pool(1);
  pool.add("a", std::vector<double>{1});
  const std::vector<EvalQuery> q{{"missing", {"a"}}};
  CHECK_THROWS_AS(evaluate(pool, q, kDefaultKs), LookupError);
}

TEST_CASE("non-unit rows are rejected") {
  EmbeddingSet pool(2);
  pool.add("a", std::vector<double>{1, 1});
  CHECK_THROWS_AS(pool.check_unit(), NumericError);
}

TEST_CASE("embedding files round-trip") {
  const auto pool = random_pool(20, 4, 1);
  const auto dir = std::filesystem::temp_directory_path() / "tgq_test_emb";
  std::filesystem::create_directories(dir);
  write_embeddings(dir / "emb", pool);
  const auto back = read_embeddings(dir / "emb");
  CHECK(back.ids() == pool.ids());
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(back.row(i)[j] - pool.row(i)[j]) < 1e-6);  // f32 on disk
  std::filesystem::remove_all(dir);
}
