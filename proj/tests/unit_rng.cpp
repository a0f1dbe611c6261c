#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "effloc/rng.hpp"

using namespace effloc;

TEST_CASE("identical seeds give identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    if (a.next_u64() == b.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_index is within bounds and hits every bucket") {
  Rng r(9);
  std::array<int, 7> counts{};
  for (int i = 0; i < 7000; ++i) counts[r.uniform_index(7)]++;
  for (int c : counts) CHECK(c > 700);
}

TEST_CASE("normal has roughly unit variance") {
  Rng r(11);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("truncated normal respects the bound") {
  Rng r(13);
  for (int i = 0; i < 10000; ++i) {
    CHECK(std::fabs(r.truncated_normal(0.02)) <= 0.04);
  }
}

TEST_CASE("forks are independent of consumption and of each other") {
  Rng a(42);
  Rng f1 = a.fork(5, 1, 2);
  a.next_u64();
  a.next_u64();
  Rng f2 = a.fork(5, 1, 2);
  for (int i = 0; i < 50; ++i) CHECK(f1.next_u64() == f2.next_u64());

  Rng g1 = Rng(42).fork(5, 1, 2);
  Rng g2 = Rng(42).fork(5, 1, 3);
  int same = 0;
  for (int i = 0; i < 50; ++i) {
    if (g1.next_u64() == g2.next_u64()) ++same;
  }
  CHECK(same == 0);
}
