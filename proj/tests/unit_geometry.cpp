#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "effloc/geometry.hpp"
#include "effloc/errors.hpp"
#include "effloc/rng.hpp"

using namespace effloc;

namespace {

UnitQuaternion random_rotation(Rng& rng) {
  UnitQuaternion q{rng.normal(), {rng.normal(), rng.normal(), rng.normal()}};
  return q.normalized();
}

constexpr double kSqrt2Over2 = 0.70710678118654752440;

}  // namespace

TEST_CASE("log of the identity is zero") {
  const Vec3 l = quat_log(UnitQuaternion{1.0, {0, 0, 0}});
  CHECK(l == Vec3{0, 0, 0});
}

TEST_CASE("log of a half turn about x") {
  const Vec3 l = quat_log(UnitQuaternion{0.0, {1, 0, 0}});
  CHECK(l[0] == doctest::Approx(M_PI / 2).epsilon(1e-15));
  CHECK(l[1] == 0.0);
  CHECK(l[2] == 0.0);
}

TEST_CASE("log of a quarter turn about z") {
  const Vec3 l = quat_log(UnitQuaternion{kSqrt2Over2, {0, 0, kSqrt2Over2}});
  CHECK(l[0] == 0.0);
  CHECK(l[1] == 0.0);
  CHECK(l[2] == doctest::Approx(M_PI / 4).epsilon(1e-15));
}

TEST_CASE("log rejects unnormalized input") {
  CHECK_THROWS_AS(quat_log(UnitQuaternion{1.0, {0.1, 0, 0}}), ContractError);
}

TEST_CASE("exp of zero is the identity") {
  const UnitQuaternion q = quat_exp({0, 0, 0});
  CHECK(q.w == 1.0);
  CHECK(q.v == Vec3{0, 0, 0});
}

TEST_CASE("exp inverts the half-turn log") {
  const UnitQuaternion q = quat_exp({M_PI / 2, 0, 0});
  CHECK(q.w == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(q.v[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("exp/log round-trip on a thousand random rotations") {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    // Uniform direction, magnitude strictly inside (0, pi).
    Vec3 w{rng.normal(), rng.normal(), rng.normal()};
    const double n = vec3_norm(w);
    const double target = rng.uniform(1e-6, M_PI - 1e-6);
    for (auto& c : w) c *= target / n;
    const Vec3 back = quat_log(quat_exp(w));
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(std::fabs(back[d] - w[d]) < 1e-9);
    }
  }
}

TEST_CASE("log norm is half the rotation angle for canonical input") {
  Rng rng(32);
  const UnitQuaternion identity;
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion q = canonicalize(random_rotation(rng));
    const double angle = rotation_error_deg(q, identity) * M_PI / 180.0;
    CHECK(vec3_norm(quat_log(q)) == doctest::Approx(angle / 2).epsilon(1e-9));
  }
}

TEST_CASE("canonicalize flips the negative hemisphere") {
  const UnitQuaternion q{-kSqrt2Over2, {0, 0, kSqrt2Over2}};
  const UnitQuaternion c = canonicalize(q);
  CHECK(c.w == kSqrt2Over2);
  CHECK(c.v[2] == -kSqrt2Over2);
}

TEST_CASE("canonicalize keeps canonical input and is idempotent") {
  const UnitQuaternion q{0.6, {0, 0.8, 0}};
  const UnitQuaternion c = canonicalize(q);
  CHECK(c.w == 0.6);
  CHECK(c.v[1] == 0.8);

  Rng rng(33);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion r = random_rotation(rng);
    const UnitQuaternion once = canonicalize(r);
    const UnitQuaternion twice = canonicalize(once);
    CHECK(once.w == twice.w);
    CHECK(once.v == twice.v);
  }
}

TEST_CASE("canonicalize tie-breaks the equator deterministically") {
  const UnitQuaternion a = canonicalize(UnitQuaternion{0.0, {-1, 0, 0}});
  CHECK(a.v[0] == 1.0);
  const UnitQuaternion b = canonicalize(UnitQuaternion{0.0, {0, -0.6, 0.8}});
  CHECK(b.v[1] == 0.6);
  CHECK(b.v[2] == -0.8);
}

TEST_CASE("hemisphere invariance of the canonical log is exact") {
  Rng rng(34);
  for (int i = 0; i < 500; ++i) {
    const UnitQuaternion q = random_rotation(rng);
    const Vec3 a = quat_log(canonicalize(q));
    const Vec3 b = quat_log(canonicalize(q.negated()));
    CHECK(a == b);  // bitwise
  }
}

TEST_CASE("rotation error basics") {
  Rng rng(35);
  const UnitQuaternion q = random_rotation(rng);
  CHECK(rotation_error_deg(q, q) == 0.0);
  CHECK(rotation_error_deg(q, q.negated()) == 0.0);

  const UnitQuaternion identity;
  const UnitQuaternion z90 = quat_exp({0, 0, M_PI / 4});
  CHECK(rotation_error_deg(identity, z90) == doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("rotation error is symmetric and obeys the triangle inequality") {
  Rng rng(36);
  for (int i = 0; i < 300; ++i) {
    const UnitQuaternion a = random_rotation(rng);
    const UnitQuaternion b = random_rotation(rng);
    const UnitQuaternion c = random_rotation(rng);
    CHECK(rotation_error_deg(a, b) == rotation_error_deg(b, a));
    CHECK(rotation_error_deg(a, c) <=
          rotation_error_deg(a, b) + rotation_error_deg(b, c) + 1e-9);
  }
}

TEST_CASE("rotate_vector matches the quarter-turn expectation") {
  const UnitQuaternion z90 = quat_exp({0, 0, M_PI / 4});
  const Vec3 r = rotate_vector(z90, {1, 0, 0});
  CHECK(r[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[2] == doctest::Approx(0.0).epsilon(1e-12));

  const Vec3 back = rotate_vector_inverse(z90, r);
  CHECK(back[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(back[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("trajectory stats on identical trajectories are zero") {
  Rng rng(37);
  std::vector<Pose> t;
  for (int i = 0; i < 10; ++i) {
    Pose p;
    p.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    p.orientation = random_rotation(rng);
    t.push_back(p);
  }
  const TrajectoryStats st = trajectory_stats(t, t);
  CHECK(st.median_position == 0.0);
  CHECK(st.mean_position == 0.0);
  CHECK(st.median_rotation_deg == 0.0);
  CHECK(st.mean_rotation_deg == 0.0);
}

TEST_CASE("median and mean at distances one two three") {
  std::vector<Pose> truth(3), pred(3);
  pred[0].position = {1, 0, 0};
  pred[1].position = {0, 2, 0};
  pred[2].position = {0, 0, 3};
  const TrajectoryStats st = trajectory_stats(pred, truth);
  CHECK(st.median_position == 2.0);
  CHECK(st.mean_position == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("median takes the lower middle element for even counts") {
  CHECK(lower_median({4.0, 1.0, 3.0, 2.0}) == 2.0);
  CHECK(lower_median({5.0, 1.0}) == 1.0);
  CHECK(lower_median({7.0}) == 7.0);
}

TEST_CASE("trajectory stats match an independent recomputation") {
  Rng rng(38);
  std::vector<Pose> pred(100), truth(100);
  for (int i = 0; i < 100; ++i) {
    for (auto* p : {&pred[i], &truth[i]}) {
      p->position = {rng.uniform(-5, 5), rng.uniform(-5, 5),
                     rng.uniform(-5, 5)};
      p->orientation = random_rotation(rng);
    }
  }
  const TrajectoryStats st = trajectory_stats(pred, truth);

  // Scripted recomputation, written independently of the library helpers.
  std::vector<double> pe, re;
  double ps = 0, rs = 0;
  for (int i = 0; i < 100; ++i) {
    const double dx = pred[i].position[0] - truth[i].position[0];
    const double dy = pred[i].position[1] - truth[i].position[1];
    const double dz = pred[i].position[2] - truth[i].position[2];
    const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
    double dot = pred[i].orientation.w * truth[i].orientation.w;
    for (int k = 0; k < 3; ++k)
      dot += pred[i].orientation.v[k] * truth[i].orientation.v[k];
    const double ang =
        2.0 * std::acos(std::min(1.0, std::fabs(dot))) * 180.0 / M_PI;
    pe.push_back(d);
    re.push_back(ang);
    ps += d;
    rs += ang;
  }
  std::sort(pe.begin(), pe.end());
  std::sort(re.begin(), re.end());
  CHECK(std::fabs(st.median_position - pe[49]) <= 1e-12);
  CHECK(std::fabs(st.median_rotation_deg - re[49]) <= 1e-12);
  CHECK(std::fabs(st.mean_position - ps / 100) <= 1e-12);
  CHECK(std::fabs(st.mean_rotation_deg - rs / 100) <= 1e-12);
}

TEST_CASE("empty or mismatched trajectories are contract errors") {
  std::vector<Pose> a(3), b(2), empty;
  CHECK_THROWS_AS(trajectory_stats(a, b), ContractError);
  CHECK_THROWS_AS(trajectory_stats(empty, empty), ContractError);
}
