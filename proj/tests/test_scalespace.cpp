#include "kts/scalespace.hpp"

#include <cmath>

#include "doctest.h"
#include "kts/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kts;

namespace {

ScalarVolume constant_volume(std::array<int, 3> dims, float value) {
  ScalarVolume v;
  v.dims = dims;
  v.data.assign(v.voxel_count(), value);
  return v;
}

void add_blob(ScalarVolume& v, const std::array<double, 3>& c, double sigma,
              double amplitude) {
  for (int z = 0; z < v.dims[2]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[0]; ++x) {
        const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
        v.at(x, y, z) += static_cast<float>(
            amplitude * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma)));
      }
}

bool same_keypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].octave != b[i].octave || a[i].level != b[i].level ||
        a[i].grid != b[i].grid || a[i].x != b[i].x || a[i].sigma != b[i].sigma ||
        a[i].dog_value != b[i].dog_value)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("constant volume: zero DoG, no keypoints") {
  const ScalarVolume v = constant_volume({16, 16, 16}, 42.0f);
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 2;
  const auto stack = build_scale_space(v, cfg);
  for (const auto& oct : stack) {
    for (const auto& level : oct.gauss)
      for (float x : level.vol.data) CHECK(x == doctest::Approx(42.0f).epsilon(1e-6));
    for (const auto& dog : oct.dog)
      for (float x : dog.data) CHECK(std::abs(x) < 1e-4);
  }
  CHECK(detect_keypoints(v, cfg).empty());
}

TEST_CASE("impulse response matches a sampled Gaussian within 2% relative L2") {
  ScalarVolume v = constant_volume({64, 64, 64}, 0.0f);
  const std::array<double, 3> c{32, 32, 32};
  v.at(32, 32, 32) = 1.0f;
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 2;  // keeps every level's 3-sigma support inside the volume
  const auto stack = build_scale_space(v, cfg);
  for (const auto& oct : stack)
    for (const auto& level : oct.gauss) {
      const ScalarVolume ref =
          oracle::sampled_gaussian(level.vol, oct.scale, c, level.sigma);
      CHECK(oracle::relative_l2(level.vol, ref) < 0.02);
    }
}

TEST_CASE("consecutive levels differ by the incremental Gaussian") {
  ScalarVolume v = constant_volume({32, 32, 32}, 0.0f);
  v.at(16, 16, 16) = 1.0f;
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 1;
  const auto stack = build_scale_space(v, cfg);
  const auto& gauss = stack[0].gauss;
  for (std::size_t k = 0; k + 1 < gauss.size(); ++k) {
    const double inc = std::sqrt(gauss[k + 1].sigma * gauss[k + 1].sigma -
                                 gauss[k].sigma * gauss[k].sigma);
    const ScalarVolume ref = oracle::dense_gaussian_convolution(gauss[k].vol, inc);
    CHECK(oracle::relative_l2(gauss[k + 1].vol, ref) < 0.02);
  }
}

TEST_CASE("single blob: one dominant keypoint at the center, sigma near the scale") {
  // Unnormalized DoG responds to a blob of scale s strongest near 0.8 s, so
  // the sampled scale range (levels 2.0 .. 3.2 in the first octave) sees
  // blobs of roughly 2.5 .. 4.2 voxels.
  for (const double s : {2.8, 3.5, 4.2}) {
    ScalarVolume v = constant_volume({64, 64, 64}, 0.0f);
    const std::array<double, 3> c{32, 32, 32};
    add_blob(v, c, s, 100.0);
    ScaleSpaceConfig cfg;
    const std::vector<Keypoint> kps = detect_keypoints(v, cfg);
    REQUIRE(!kps.empty());

    // The whole list must equal the exhaustive scan.
    const auto stack = build_scale_space(v, cfg);
    const auto scanned =
        oracle::scan_extrema(stack, effective_contrast_threshold(v, cfg));
    CHECK(same_keypoints(kps, scanned));

    const Keypoint* dominant = &kps[0];
    for (const Keypoint& kp : kps)
      if (std::abs(kp.dog_value) > std::abs(dominant->dog_value)) dominant = &kp;
    for (int d = 0; d < 3; ++d) CHECK(std::abs(dominant->x[d] - c[d]) <= 1.0);

    // Oracle-maximizing scale: strongest |DoG| response over all voxels
    // and levels of the same stack.
    double best = 0.0, best_sigma = 0.0;
    for (const Keypoint& kp : scanned)
      if (std::abs(kp.dog_value) > best) {
        best = std::abs(kp.dog_value);
        best_sigma = kp.sigma;
      }
    const double ratio = dominant->sigma / best_sigma;
    CHECK(ratio <= cfg.kappa + 1e-9);
    CHECK(ratio >= 1.0 / cfg.kappa - 1e-9);
  }
}

TEST_CASE("two separated blobs yield a keypoint near each center") {
  ScalarVolume v = constant_volume({64, 64, 64}, 0.0f);
  const std::array<double, 3> c1{20, 22, 24};
  const std::array<double, 3> c2{44, 40, 40};
  add_blob(v, c1, 2.5, 80.0);
  add_blob(v, c2, 2.5, 80.0);
  ScaleSpaceConfig cfg;
  const std::vector<Keypoint> kps = detect_keypoints(v, cfg);
  const auto stack = build_scale_space(v, cfg);
  CHECK(same_keypoints(kps, oracle::scan_extrema(
                                stack, effective_contrast_threshold(v, cfg))));
  auto near = [&](const std::array<double, 3>& c) {
    for (const Keypoint& kp : kps) {
      bool ok = true;
      for (int d = 0; d < 3; ++d) ok = ok && std::abs(kp.x[d] - c[d]) <= 1.5;
      if (ok) return true;
    }
    return false;
  };
  CHECK(near(c1));
  CHECK(near(c2));
}

namespace {

// Band-limited texture with content at the detector's sampled scales.
// White noise has no scale-space extrema: the finest DoG level dominates
// every coarser one, so nothing is extremal across scale.
ScalarVolume blob_texture(Rng& rng, std::array<int, 3> dims, int blobs,
                          double margin = 14.0) {
  ScalarVolume v = constant_volume(dims, 0.0f);
  for (int i = 0; i < blobs; ++i) {
    const std::array<double, 3> c{rng.uniform(margin, dims[0] - 1 - margin),
                                  rng.uniform(margin, dims[1] - 1 - margin),
                                  rng.uniform(margin, dims[2] - 1 - margin)};
    add_blob(v, c, rng.uniform(2.6, 3.8),
             (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(40.0, 90.0));
  }
  return v;
}

}  // namespace

TEST_CASE("detection is deterministic") {
  Rng rng(33);
  const ScalarVolume v = blob_texture(rng, {48, 48, 48}, 8);
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 2;
  const auto a = detect_keypoints(v, cfg);
  const auto b = detect_keypoints(v, cfg);
  CHECK(same_keypoints(a, b));
  CHECK(!a.empty());
}

TEST_CASE("integer translation shifts interior keypoints") {
  ScalarVolume v = constant_volume({64, 64, 64}, 0.0f);
  Rng rng(5);
  for (int i = 0; i < 6; ++i) {
    std::array<double, 3> c{rng.uniform(22, 40), rng.uniform(22, 40),
                            rng.uniform(22, 40)};
    add_blob(v, c, rng.uniform(2.6, 3.8), rng.uniform(40, 90) * (i % 2 ? 1 : -1));
  }
  const std::array<int, 3> t{5, -3, 4};
  ScalarVolume shifted = constant_volume(v.dims, 0.0f);
  for (int z = 0; z < v.dims[2]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[0]; ++x) {
        const int sx = x - t[0], sy = y - t[1], sz = z - t[2];
        if (v.inside(sx, sy, sz)) shifted.at(x, y, z) = v.at(sx, sy, sz);
      }

  ScaleSpaceConfig cfg;
  cfg.num_octaves = 2;
  const auto base_kps = detect_keypoints(v, cfg);
  const auto shifted_kps = detect_keypoints(shifted, cfg);

  auto interior = [&](const Keypoint& kp, const ScalarVolume& vol) {
    for (int d = 0; d < 3; ++d) {
      if (kp.x[d] < 4 * kp.sigma || kp.x[d] > vol.dims[d] - 1 - 4 * kp.sigma)
        return false;
    }
    return true;
  };
  int checked = 0;
  for (const Keypoint& kp : base_kps) {
    if (!interior(kp, v)) continue;
    Keypoint moved = kp;
    for (int d = 0; d < 3; ++d) moved.x[d] += t[d];
    if (!interior(moved, shifted)) continue;
    bool found = false;
    for (const Keypoint& other : shifted_kps)
      if (other.x == moved.x && other.sigma == kp.sigma) found = true;
    CHECK(found);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("positive affine intensity change preserves the extremum set") {
  Rng rng(77);
  const ScalarVolume v = blob_texture(rng, {40, 40, 40}, 6);
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 1;
  const double a = 3.5, b = -12.0;
  ScalarVolume w = v;
  for (float& x : w.data) x = static_cast<float>(a * x + b);

  // The default threshold is relative to the intensity range, so it scales
  // with `a` automatically.
  const auto kv = detect_keypoints(v, cfg);
  const auto kw = detect_keypoints(w, cfg);
  REQUIRE(!kv.empty());
  REQUIRE(kv.size() == kw.size());
  for (std::size_t i = 0; i < kv.size(); ++i) {
    CHECK(kv[i].x == kw[i].x);
    CHECK(kv[i].sigma == kw[i].sigma);
    CHECK(kw[i].dog_value ==
          doctest::Approx(a * kv[i].dog_value).epsilon(1e-3));
  }
}

TEST_CASE("volume too small for the requested octaves") {
  const ScalarVolume v = constant_volume({16, 16, 16}, 0.0f);
  ScaleSpaceConfig cfg;
  cfg.num_octaves = 3;  // 16 -> 8 -> 4: third octave under the minimum
  CHECK_THROWS_AS(build_scale_space(v, cfg), input_error);
  const ScalarVolume tiny = constant_volume({7, 16, 16}, 0.0f);
  ScaleSpaceConfig one;
  one.num_octaves = 1;
  CHECK_THROWS_AS(build_scale_space(tiny, one), input_error);
}
