#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "csvqa/rng.hpp"

using csvqa::Rng;

TEST_CASE("same seed reproduces the sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and split tags give different streams") {
  Rng a(1), b(2);
  CHECK(a.next_u64() != b.next_u64());

  Rng root(7);
  Rng c1 = root.split("matrix");
  Rng c2 = root.split("scenes");
  Rng c1_again = root.split("matrix");
  CHECK(c1.next_u64() != c2.next_u64());
  CHECK(Rng(7).split("matrix").next_u64() == c1_again.next_u64());
}

TEST_CASE("splitting is independent of draw position") {
  // Deriving a child must not depend on how much the parent has been used.
  Rng a(9);
  Rng child_before = a.split(3);
  a.next_u64();
  a.next_u64();
  Rng child_after = a.split(3);
  CHECK(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("next_double lies in [0,1)") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.next_double();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("next_below is unbiased enough and in range") {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const auto v = rng.next_below(7);
    REQUIRE(v < 7);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) CHECK(std::abs(c - draws / 7) < 600);  // ~6 sigma
}

TEST_CASE("gaussian moments") {
  Rng rng(13);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
