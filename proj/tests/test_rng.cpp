#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "lgc3d/rng.hpp"

using namespace lgc3d;

TEST_CASE("same seed reproduces the stream, different seed diverges") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.next(), vb = b.next(), vc = c.next();
    all_equal = all_equal && (va == vb);
    any_diff = any_diff || (va != vc);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform stays in [0,1) and bounded variant respects bounds") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
}

TEST_CASE("normal has roughly zero mean and unit variance") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("randint is bounded and covers the range") {
  Rng rng(3);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) {
    uint64_t v = rng.randint(5);
    REQUIRE(v < 5);
    hits[static_cast<size_t>(v)]++;
  }
  for (int h : hits) CHECK(h > 5000 / 5 / 2);  // loose uniformity
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng(5).shuffle(v);
  Rng(5).shuffle(w);
  CHECK(v == w);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);

  std::vector<int> u = expect;
  Rng(6).shuffle(u);
  CHECK(u != v);
}

TEST_CASE("derive yields decorrelated deterministic child streams") {
  Rng base(99);
  Rng c1 = base.derive(1), c2 = base.derive(2), c1b = Rng(99).derive(1);
  CHECK(c1.next() != c2.next());
  Rng c1c = Rng(99).derive(1);
  CHECK(Rng(99).derive(1).next() == c1b.next());
  (void)c1c;
}

TEST_CASE("state round trip resumes the identical stream") {
  Rng rng(123);
  for (int i = 0; i < 17; ++i) rng.uniform();
  std::string s = rng.state_string();

  std::vector<double> ahead;
  for (int i = 0; i < 8; ++i) ahead.push_back(rng.uniform());

  Rng other(0);
  other.restore_state(s);
  for (int i = 0; i < 8; ++i) CHECK(other.uniform() == ahead[static_cast<size_t>(i)]);
}
