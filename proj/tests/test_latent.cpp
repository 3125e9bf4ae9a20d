#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"

#include "age/error.hpp"
#include "age/latent.hpp"
#include "age/random.hpp"
#include "age/world.hpp"

using namespace age;

namespace {

LatentCode random_code(Rng& rng, std::size_t L, std::size_t d, double scale = 1.0) {
  Matrix m(L, d);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  return LatentCode(std::move(m));
}

LatentDataset one_category(const std::vector<LatentCode>& codes, const std::string& name = "a") {
  LatentDataset ds(codes.front().layers(), codes.front().dim());
  const auto id = ds.add_category(name);
  for (const auto& c : codes) ds.add_sample(id, c);
  return ds;
}

}  // namespace

TEST_CASE("LatentCode rejects non-finite entries") {
  Matrix m = Matrix::Zero(2, 3);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(LatentCode{m}, RangeError);
  m(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(LatentCode{m}, RangeError);
}

TEST_CASE("LatentCode flattens layer-major and round-trips") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const LatentCode c(m);
  const Vector flat = c.flatten();
  for (int i = 0; i < 6; ++i) CHECK(flat(i) == i + 1);
  CHECK(LatentCode::from_flat(flat, 2, 3) == c);
  CHECK_THROWS_AS(LatentCode::from_flat(flat, 4, 2), ShapeError);
}

TEST_CASE("dataset keeps one shape and unique categories") {
  LatentDataset ds(2, 3);
  const auto a = ds.add_category("a");
  CHECK_THROWS_AS(ds.add_category("a"), ConfigError);
  CHECK_THROWS_AS(ds.add_sample(a, LatentCode(3, 2)), ShapeError);
  CHECK_THROWS_AS(ds.add_sample(7, LatentCode(2, 3)), NotFound);
  ds.add_sample(a, LatentCode(2, 3));
  CHECK(ds.labels() == std::vector<std::size_t>{0});
  CHECK(ds.find_category("a") == a);
  CHECK_FALSE(ds.find_category("b").has_value());
}

TEST_CASE("compute_class_embedding examples") {
  Rng rng(1);
  SUBCASE("single sample is its own mean") {
    const auto w = random_code(rng, 3, 5);
    CHECK(compute_class_embedding(one_category({w}), "a").code == w);
  }
  SUBCASE("w and -w average to zero") {
    const auto w = random_code(rng, 3, 5);
    const LatentCode neg(Matrix(-w.values()));
    const auto e = compute_class_embedding(one_category({w, neg}), "a");
    CHECK(e.code.values().isZero(0.0));
  }
  SUBCASE("seven codes match pairwise summation") {
    Rng r42(42);
    std::vector<LatentCode> codes;
    for (int i = 0; i < 7; ++i) codes.push_back(random_code(r42, 2, 4));
    const auto e = compute_class_embedding(one_category(codes), std::size_t{0});
    for (Eigen::Index l = 0; l < 2; ++l) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        std::vector<double> col;
        for (const auto& c : codes) col.push_back(c.values()(l, j));
        const double expect = oracle::pairwise_sum(col.data(), col.size()) / 7.0;
        const double got = e.code.values()(l, j);
        CHECK(std::abs(got - expect) <= 1e-12 * std::max(std::abs(expect), 1e-300) + 1e-15);
      }
    }
  }
  SUBCASE("errors") {
    LatentDataset ds(1, 1);
    ds.add_category("empty");
    CHECK_THROWS_AS(compute_class_embedding(ds, "missing"), NotFound);
    CHECK_THROWS_AS(compute_class_embedding(ds, "empty"), EmptyCategory);
    CHECK_THROWS_AS(compute_class_embedding(ds, std::size_t{3}), NotFound);
  }
}

TEST_CASE("class mean is invariant to summation order") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.index(40);
    std::vector<LatentCode> codes;
    for (std::size_t i = 0; i < n; ++i) codes.push_back(random_code(rng, 2, 3, 1.0 + 10.0 * rng.uniform()));
    auto shuffled = codes;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.index(i + 1)]);
    const Matrix a = compute_class_embedding(one_category(codes), std::size_t{0}).code.values();
    const Matrix b = compute_class_embedding(one_category(shuffled), std::size_t{0}).code.values();
    Matrix direct = Matrix::Zero(2, 3);
    for (const auto& c : shuffled) direct += c.values() / static_cast<double>(n);
    CHECK(oracle::rel_diff(a, b) <= 1e-9);
    CHECK(oracle::rel_diff(a, direct) <= 1e-9);
  }
}

TEST_CASE("compute_delta examples") {
  Rng rng(7);
  const auto w = random_code(rng, 3, 4);
  const auto m = random_code(rng, 3, 4);
  CHECK(compute_delta(w, w).values().isZero(0.0));
  CHECK(compute_delta(w, LatentCode(3, 4)).values() == w.values());
  const auto d = compute_delta(w, ClassEmbedding{"x", m});
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(d.values()(i, j) == w.values()(i, j) - m.values()(i, j));
  CHECK_THROWS_AS(compute_delta(w, LatentCode(4, 3)), ShapeError);
  CHECK_THROWS_AS(add_delta(LatentCode(4, 3), d), ShapeError);
}

TEST_CASE("add_delta undoes compute_delta up to two roundings") {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto w = random_code(rng, 3, 8, std::pow(10.0, rng.uniform(-3, 3)));
    const auto m = random_code(rng, 3, 8, std::pow(10.0, rng.uniform(-3, 3)));
    const auto back = add_delta(m, compute_delta(w, m));
    const Matrix bound = 4.0 * eps * w.values().cwiseAbs().cwiseMax(m.values().cwiseAbs());
    CHECK(((back.values() - w.values()).cwiseAbs().array() <= bound.array()).all());
  }
}

TEST_CASE("deltas of a category average to zero") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<LatentCode> codes;
    const std::size_t n = 1 + rng.index(30);
    for (std::size_t i = 0; i < n; ++i) codes.push_back(random_code(rng, 2, 5, 3.0));
    const auto ds = one_category(codes);
    const auto e = compute_class_embedding(ds, std::size_t{0});
    Matrix sum = Matrix::Zero(2, 5);
    for (const auto& c : codes) sum += compute_delta(c, e).values();
    CHECK(oracle::max_abs(sum / static_cast<double>(n)) <= 1e-9);
  }
}

TEST_CASE("build_embedding_bank examples") {
  Rng rng(5);
  SUBCASE("one category") {
    std::vector<LatentCode> codes{random_code(rng, 3, 4), random_code(rng, 3, 4)};
    const auto ds = one_category(codes);
    const auto bank = build_embedding_bank(ds);
    const auto e = compute_class_embedding(ds, std::size_t{0});
    REQUIRE(bank.size() == 1);
    for (std::size_t l = 0; l < 3; ++l) CHECK(bank.layer(l).col(0) == e.code.layer(l));
  }
  SUBCASE("mirrored categories give negated columns") {
    LatentDataset ds(3, 4);
    const auto a = ds.add_category("a");
    const auto b = ds.add_category("b");
    std::vector<LatentCode> codes;
    for (int i = 0; i < 5; ++i) codes.push_back(random_code(rng, 3, 4));
    for (const auto& c : codes) ds.add_sample(a, c);
    for (const auto& c : codes) ds.add_sample(b, LatentCode(Matrix(-c.values())));
    const auto bank = build_embedding_bank(ds);
    for (std::size_t l = 0; l < 3; ++l) CHECK(bank.layer(l).col(1) == -bank.layer(l).col(0));
  }
  SUBCASE("synthetic world matches per-category mean oracle") {
    SyntheticWorldSpec spec;
    spec.seed = 3;
    const auto world = generate_world(spec);
    const auto ds = sample_dataset(world, 20, Split::kSeen, 3);
    const auto bank = build_embedding_bank(ds);
    REQUIRE(bank.size() == 8);
    for (std::size_t c = 0; c < 8; ++c) {
      Matrix sum = Matrix::Zero(3, 32);
      std::size_t n = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels()[i] != c) continue;
        sum += ds.codes()[i].values();
        ++n;
      }
      const Matrix mean = sum / static_cast<double>(n);
      for (std::size_t l = 0; l < 3; ++l) {
        const Vector col = bank.layer(l).col(static_cast<Eigen::Index>(c));
        CHECK(oracle::rel_diff(col, mean.row(static_cast<Eigen::Index>(l)).transpose()) <= 1e-12);
      }
      CHECK(oracle::rel_diff(bank.flat().col(static_cast<Eigen::Index>(c)), bank.embedding(c).flatten()) == 0.0);
    }
  }
  SUBCASE("empty dataset") { CHECK_THROWS_AS(build_embedding_bank(LatentDataset(2, 2)), EmptyDataset); }
}

TEST_CASE("nearest_class examples") {
  Rng rng(11);
  LatentDataset ds(2, 3);
  for (int c = 0; c < 5; ++c) {
    const auto id = ds.add_category("c" + std::to_string(c));
    ds.add_sample(id, random_code(rng, 2, 3, 5.0));
  }
  const auto bank = build_embedding_bank(ds);
  for (std::size_t m = 0; m < 5; ++m) CHECK(nearest_class_index(bank.embedding(m), bank) == m);
  CHECK(nearest_class(bank.embedding(3), bank) == "c3");

  SUBCASE("equidistant code goes to the lower index") {
    const LatentCode mid(Matrix(0.5 * (bank.embedding(0).values() + bank.embedding(1).values())));
    LatentDataset two(2, 3);
    two.add_sample(two.add_category("x"), bank.embedding(0));
    two.add_sample(two.add_category("y"), bank.embedding(1));
    const auto b2 = build_embedding_bank(two);
    const double d0 = (mid.values() - b2.embedding(0).values()).norm();
    const double d1 = (mid.values() - b2.embedding(1).values()).norm();
    if (d0 == d1) CHECK(nearest_class_index(mid, b2) == 0);
    // Exact construction of a tie.
    Matrix e0 = Matrix::Zero(2, 3), e1 = Matrix::Zero(2, 3);
    e0(0, 0) = 1.0;
    e1(0, 0) = -1.0;
    LatentDataset sym(2, 3);
    sym.add_sample(sym.add_category("p"), LatentCode(e0));
    sym.add_sample(sym.add_category("q"), LatentCode(e1));
    CHECK(nearest_class_index(LatentCode(2, 3), build_embedding_bank(sym)) == 0);
  }

  SUBCASE("small perturbation keeps the category, exhaustive oracle") {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = a + 1; b < 5; ++b)
        gap = std::min(gap, (bank.embedding(a).values() - bank.embedding(b).values()).norm());
    for (std::size_t m = 0; m < 5; ++m) {
      Matrix dir(2, 3);
      for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = rng.normal();
      const LatentCode q(Matrix(bank.embedding(m).values() + 0.01 * gap * dir / dir.norm()));
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < 5; ++c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < q.values().size(); ++i) {
          const double diff = q.values().data()[i] - bank.embedding(c).values().data()[i];
          s += diff * diff;
        }
        if (s < best_d) best_d = s, best = c;
      }
      CHECK(best == m);
      CHECK(nearest_class_index(q, bank) == m);
    }
  }

  CHECK_THROWS_AS(nearest_class_index(LatentCode(3, 2), bank), ShapeError);
  CHECK_THROWS_AS(nearest_class_index(LatentCode(2, 3), ClassEmbeddingBank{}), EmptyDataset);
}

TEST_CASE("nearest_class is invariant under a common shift") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    LatentDataset ds(2, 4), shifted(2, 4);
    const auto shift = random_code(rng, 2, 4, 3.0);
    for (int c = 0; c < 6; ++c) {
      const auto w = random_code(rng, 2, 4, 2.0);
      ds.add_sample(ds.add_category(std::to_string(c)), w);
      shifted.add_sample(shifted.add_category(std::to_string(c)), add_delta(w, DeltaCode(shift.values())));
    }
    const auto b = build_embedding_bank(ds);
    const auto bs = build_embedding_bank(shifted);
    for (int k = 0; k < 10; ++k) {
      const auto q = random_code(rng, 2, 4, 2.0);
      CHECK(nearest_class_index(q, b) == nearest_class_index(add_delta(q, DeltaCode(shift.values())), bs));
    }
  }
}

TEST_CASE("bank concat appends columns") {
  Rng rng(2);
  LatentDataset a(2, 2), b(2, 2);
  a.add_sample(a.add_category("a"), random_code(rng, 2, 2));
  b.add_sample(b.add_category("b"), random_code(rng, 2, 2));
  const auto joined = build_embedding_bank(a).concat(build_embedding_bank(b));
  CHECK(joined.categories() == std::vector<std::string>{"a", "b"});
  CHECK(joined.embedding(1) == b.codes()[0]);
}
