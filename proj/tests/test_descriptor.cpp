#include "kts/descriptor.hpp"

#include <cmath>

#include "doctest.h"
#include "kts/phantom.hpp"
#include "kts/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kts;

namespace {

ScalarVolume blob_field(Rng& rng, std::array<int, 3> dims, int blobs) {
  ScalarVolume v;
  v.dims = dims;
  v.data.assign(v.voxel_count(), 0.0f);
  for (int i = 0; i < blobs; ++i) {
    const std::array<double, 3> c{rng.uniform(10, dims[0] - 11),
                                  rng.uniform(10, dims[1] - 11),
                                  rng.uniform(10, dims[2] - 11)};
    const double s = rng.uniform(2.2, 3.8);
    const double a = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(30, 80);
    for (int z = 0; z < dims[2]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[0]; ++x) {
          const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
          v.at(x, y, z) +=
              float(a * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * s * s)));
        }
  }
  return v;
}

Keypoint keypoint_at(double x, double y, double z, double sigma) {
  Keypoint kp;
  kp.x = {x, y, z};
  kp.sigma = sigma;
  return kp;
}

double l2_diff(const Descriptor64& a, const Descriptor64& b) {
  double s = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("constant region is degenerate") {
  ScalarVolume v;
  v.dims = {32, 32, 32};
  v.data.assign(v.voxel_count(), 5.0f);
  const auto d = compute_descriptor(v, keypoint_at(16, 16, 16, 2.0), {});
  CHECK(!d.has_value());
}

TEST_CASE("support outside the volume drops the keypoint") {
  Rng rng(3);
  const ScalarVolume v = blob_field(rng, {32, 32, 32}, 4);
  DescriptorConfig cfg;
  // sigma 2 -> support half-edge 8 plus one gradient voxel
  CHECK(!descriptor_support_inside(v, keypoint_at(8, 16, 16, 2.0), cfg));
  CHECK(descriptor_support_inside(v, keypoint_at(16, 16, 16, 2.0), cfg));
  CHECK(!compute_descriptor(v, keypoint_at(2, 16, 16, 2.0), cfg).has_value());
}

TEST_CASE("descriptor is invariant to positive affine intensity maps") {
  Rng rng(11);
  int cases = 0;
  while (cases < 100) {
    const ScalarVolume v = blob_field(rng, {40, 40, 40}, 5);
    const Keypoint kp = keypoint_at(rng.uniform(14, 25), rng.uniform(14, 25),
                                    rng.uniform(14, 25), rng.uniform(1.6, 2.6));
    const auto base = compute_descriptor(v, kp, {});
    if (!base) continue;
    ScalarVolume w = v;
    const double a = rng.uniform(0.2, 5.0);
    const double b = rng.uniform(-100.0, 100.0);
    for (float& x : w.data) x = float(a * x + b);
    const auto mapped = compute_descriptor(w, kp, {});
    REQUIRE(mapped.has_value());
    CHECK(l2_diff(*base, *mapped) < 1e-6);
    ++cases;
  }
}

TEST_CASE("translated texture gives the same descriptor at the shifted keypoint") {
  Rng rng(12);
  const std::array<int, 3> dims{48, 48, 48};
  const ScalarVolume v = blob_field(rng, dims, 6);
  const std::array<int, 3> t{4, -3, 5};
  ScalarVolume shifted;
  shifted.dims = dims;
  shifted.data.assign(shifted.voxel_count(), 0.0f);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const int sx = x - t[0], sy = y - t[1], sz = z - t[2];
        if (v.inside(sx, sy, sz)) shifted.at(x, y, z) = v.at(sx, sy, sz);
      }
  const Keypoint kp = keypoint_at(22, 24, 20, 2.0);
  Keypoint moved = kp;
  for (int d = 0; d < 3; ++d) moved.x[d] += t[d];
  const auto a = compute_descriptor(v, kp, {});
  const auto b = compute_descriptor(shifted, moved, {});
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(l2_diff(*a, *b) < 1e-6);
}

TEST_CASE("descriptor depends only on the support cube") {
  Rng rng(13);
  const ScalarVolume v = blob_field(rng, {48, 48, 48}, 6);
  const Keypoint kp = keypoint_at(24, 24, 24, 2.0);
  DescriptorConfig cfg;
  const auto base = compute_descriptor(v, kp, cfg);
  REQUIRE(base.has_value());

  // Zero everything outside the support cube plus the smoothing reach
  // (gradients are taken on the sigma-smoothed image, whose kernel pulls
  // from another 3 sigma around the support).
  const double reach = cfg.support_factor * kp.sigma / 2.0 + 1.0 +
                       std::ceil(3.0 * kp.sigma);
  ScalarVolume masked = v;
  for (int z = 0; z < v.dims[2]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[0]; ++x) {
        if (std::abs(x - kp.x[0]) > reach || std::abs(y - kp.x[1]) > reach ||
            std::abs(z - kp.x[2]) > reach)
          masked.at(x, y, z) = 0.0f;
      }
  const auto after = compute_descriptor(masked, kp, cfg);
  REQUIRE(after.has_value());
  CHECK(l2_diff(*base, *after) < 1e-12);
}

TEST_CASE("clip-renormalize is idempotent and caps components") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    Descriptor64 d{};
    const int nonzero = 1 + int(rng.uniform_int(0, 63));
    for (int i = 0; i < nonzero; ++i)
      d[rng.uniform_int(0, 63)] = float(rng.uniform(0.0, 1.0));
    const Descriptor64 once = clip_renormalize(d);
    const Descriptor64 twice = clip_renormalize(once);
    for (int i = 0; i < 64; ++i)
      CHECK(std::abs(double(once[i]) - double(twice[i])) <= 1e-6);
    if (l2_norm(once) > 0.0) CHECK(l2_norm(once) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("computed descriptors are unit norm with capped components") {
  Rng rng(15);
  int cases = 0;
  while (cases < 50) {
    const ScalarVolume v = blob_field(rng, {40, 40, 40}, 6);
    const Keypoint kp = keypoint_at(rng.uniform(15, 24), rng.uniform(15, 24),
                                    rng.uniform(15, 24), rng.uniform(1.6, 2.4));
    const auto d = compute_descriptor(v, kp, {});
    if (!d) continue;
    CHECK(l2_norm(*d) == doctest::Approx(1.0).epsilon(1e-6));
    for (int i = 0; i < 64; ++i) CHECK(double((*d)[i]) <= 0.2 + 1e-6);
    ++cases;
  }
}

TEST_CASE("descriptors agree across a 2x upsampled copy") {
  Rng rng(16);
  const ScalarVolume v = blob_field(rng, {32, 32, 32}, 5);
  ScalarVolume up;
  up.dims = {64, 64, 64};
  up.data.assign(up.voxel_count(), 0.0f);
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        // trilinear sample at (x/2, y/2, z/2)
        const double fx = x / 2.0, fy = y / 2.0, fz = z / 2.0;
        const int x0 = std::min(int(fx), 30), y0 = std::min(int(fy), 30),
                  z0 = std::min(int(fz), 30);
        const double ax = fx - x0, ay = fy - y0, az = fz - z0;
        double acc = 0.0;
        for (int dz = 0; dz <= 1; ++dz)
          for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx)
              acc += (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay) * (dz ? az : 1 - az) *
                     v.at(x0 + dx, y0 + dy, z0 + dz);
        up.at(x, y, z) = float(acc);
      }
  const Keypoint kp = keypoint_at(16, 15, 17, 2.0);
  Keypoint scaled = keypoint_at(32, 30, 34, 4.0);
  const auto a = compute_descriptor(v, kp, {});
  const auto b = compute_descriptor(up, scaled, {});
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(l2_diff(*a, *b) < 0.1);
}

TEST_CASE("assign_labels looks up rounded positions and drops background") {
  LabelVolume seg;
  seg.dims = {8, 8, 8};
  seg.num_labels = 3;
  seg.data.assign(seg.voxel_count(), 0);
  seg.at(2, 2, 2) = 3;
  seg.at(5, 5, 5) = 1;

  std::vector<DescribedKeypoint> kps(3);
  kps[0].kp = keypoint_at(2.2, 1.8, 2.4, 1.6);  // rounds to (2,2,2) -> 3
  kps[1].kp = keypoint_at(4, 4, 4, 1.6);        // background -> dropped
  kps[2].kp = keypoint_at(5, 5, 5, 1.6);        // -> 1

  const auto labeled = assign_labels(kps, seg);
  REQUIRE(labeled.size() == 2);
  CHECK(labeled[0].label == 3);
  CHECK(labeled[0].kp.x == kps[0].kp.x);
  CHECK(labeled[1].label == 1);
}

TEST_CASE("labeled keypoint counts match a direct mask lookup on a phantom") {
  PhantomConfig cfg;
  cfg.dims = {96, 96, 96};
  cfg.seed = 4;
  const Subject s = generate_subject(cfg, 0);
  ScaleSpaceConfig ss;
  const auto kps = extract_keypoints(s.image, ss, {});
  REQUIRE(!kps.empty());

  const auto labeled = assign_labels(kps, s.labels);
  std::vector<long> expected(cfg.num_organs + 1, 0);
  for (const auto& dk : kps) {
    const int x = int(std::llround(dk.kp.x[0]));
    const int y = int(std::llround(dk.kp.x[1]));
    const int z = int(std::llround(dk.kp.x[2]));
    if (s.labels.inside(x, y, z)) ++expected[s.labels.at(x, y, z)];
  }
  std::vector<long> got(cfg.num_organs + 1, 0);
  for (const auto& dk : labeled) ++got[dk.label];
  for (int l = 1; l <= cfg.num_organs; ++l) CHECK(got[l] == expected[l]);
  CHECK(got[0] == 0);
  long foreground = 0;
  for (int l = 1; l <= cfg.num_organs; ++l) foreground += expected[l];
  CHECK(long(labeled.size()) == foreground);
}
