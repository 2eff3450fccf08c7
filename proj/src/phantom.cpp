#include "kts/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kts/rng.hpp"

namespace kts {

namespace {

// Unnormalized DoG peaks near 0.8 * blob sigma; with sigma0 = 1.6 and three
// levels per octave the first octave detects blob scales in roughly
// [2.5, 4.2], which is where the texture must live.
constexpr double kBlobSigmaMin = 2.6;
constexpr double kBlobSigmaMax = 3.8;
constexpr double kBlobAmpMin = 28.0;
constexpr double kBlobAmpMax = 45.0;
constexpr double kSemiAxisMinFrac = 0.085;  // of the smallest volume extent
constexpr double kSemiAxisMaxFrac = 0.115;
constexpr double kIntensityBase = 90.0;
constexpr double kIntensityStep = 18.0;
// Support margin for the largest texture-scale keypoint (4 * sigma + 2).
constexpr int kKeypointMargin = 14;

struct OrganTemplate {
  int label;
  std::array<double, 3> center;  // template coordinates
  std::array<double, 3> semi_axes;
  double intensity;
  std::vector<PhantomBlob> blobs;
};

// Blob anchors in ellipsoid-scaled coordinates: octants, center, faces.
const std::array<std::array<double, 3>, 15> kBlobAnchors = {{
    {0.30, 0.30, 0.30},   {-0.30, 0.30, 0.30},  {0.30, -0.30, 0.30},
    {-0.30, -0.30, 0.30}, {0.30, 0.30, -0.30},  {-0.30, 0.30, -0.30},
    {0.30, -0.30, -0.30}, {-0.30, -0.30, -0.30},
    {0.0, 0.0, 0.0},
    {0.42, 0.0, 0.0},     {-0.42, 0.0, 0.0},    {0.0, 0.42, 0.0},
    {0.0, -0.42, 0.0},    {0.0, 0.0, 0.42},     {0.0, 0.0, -0.42},
}};

void validate(const PhantomConfig& cfg) {
  if (cfg.num_organs < 1 || cfg.num_organs > 8)
    throw input_error("phantom: num_organs must be in [1, 8]");
  if (cfg.texture_blob_count < 0 ||
      cfg.texture_blob_count > static_cast<int>(kBlobAnchors.size()))
    throw input_error("phantom: texture_blob_count must be in [0, 15]");
  if (cfg.quiet_organ < 0 || cfg.quiet_organ > cfg.num_organs)
    throw input_error("phantom: quiet_organ out of range");
  if (cfg.subject_jitter < 0 || cfg.global_shift_range < 0 || cfg.noise_sigma < 0)
    throw input_error("phantom: jitter, shift range, and noise must be non-negative");
}

std::vector<OrganTemplate> build_template(const PhantomConfig& cfg) {
  Rng rng(cfg.seed, 0);
  std::vector<OrganTemplate> organs;
  organs.reserve(cfg.num_organs);

  const int min_dim = *std::min_element(cfg.dims.begin(), cfg.dims.end());
  const double semi_lo = kSemiAxisMinFrac * min_dim;
  const double semi_hi = kSemiAxisMaxFrac * min_dim;

  for (int l = 1; l <= cfg.num_organs; ++l) {
    const int slot = l - 1;
    OrganTemplate organ;
    organ.label = l;
    organ.center = {cfg.dims[0] * ((slot & 1) ? 0.66 : 0.34),
                    cfg.dims[1] * ((slot & 2) ? 0.66 : 0.34),
                    cfg.dims[2] * ((slot & 4) ? 0.66 : 0.34)};
    for (double& a : organ.semi_axes) a = rng.uniform(semi_lo, semi_hi);
    organ.intensity = kIntensityBase + kIntensityStep * (l - 1);

    const bool quiet = (l == cfg.quiet_organ);
    if (quiet) organ.intensity = 0.0;
    for (int b = 0; b < cfg.texture_blob_count; ++b) {
      // Blob parameters are always drawn so the stream does not depend on
      // which organ is quiet; quiet organs just discard their texture.
      PhantomBlob blob;
      for (int d = 0; d < 3; ++d)
        blob.center[d] = static_cast<int>(std::llround(
            organ.center[d] + kBlobAnchors[b][d] * organ.semi_axes[d] +
            rng.uniform(-0.8, 0.8)));
      blob.sigma = rng.uniform(kBlobSigmaMin, kBlobSigmaMax);
      blob.amplitude = (rng.uniform() < 0.5 ? -1.0 : 1.0) *
                       rng.uniform(kBlobAmpMin, kBlobAmpMax);
      if (!quiet) organ.blobs.push_back(blob);
    }
    organs.push_back(std::move(organ));
  }

  // Geometry guarantees: organs stay disjoint and interior under the worst
  // jitter and shift, and texture keypoints keep full descriptor support.
  const double jit = cfg.subject_jitter;
  const double shift = std::ceil(cfg.global_shift_range);
  for (const OrganTemplate& o : organs) {
    for (int d = 0; d < 3; ++d) {
      const double a = o.semi_axes[d];
      if (o.center[d] - a - jit - shift < 1.0 ||
          o.center[d] + a + jit + shift > cfg.dims[d] - 2.0)
        throw input_error("phantom: organ " + std::to_string(o.label) +
                          " does not fit inside the volume");
    }
    for (const PhantomBlob& b : o.blobs)
      for (int d = 0; d < 3; ++d)
        if (b.center[d] - shift - kKeypointMargin < 0.0 ||
            b.center[d] + shift + kKeypointMargin > cfg.dims[d] - 1.0)
          throw input_error("phantom: texture of organ " + std::to_string(o.label) +
                            " too close to the volume boundary");
  }
  for (std::size_t i = 0; i < organs.size(); ++i)
    for (std::size_t j = i + 1; j < organs.size(); ++j) {
      const auto& a = organs[i];
      const auto& b = organs[j];
      const double ra = *std::max_element(a.semi_axes.begin(), a.semi_axes.end());
      const double rb = *std::max_element(b.semi_axes.begin(), b.semi_axes.end());
      double dist = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double dd = a.center[d] - b.center[d];
        dist += dd * dd;
      }
      dist = std::sqrt(dist);
      if (dist < ra + rb + 2.0 * jit + 2.0)
        throw input_error("phantom: organs " + std::to_string(a.label) + " and " +
                          std::to_string(b.label) + " may overlap");
    }
  return organs;
}

}  // namespace

Subject generate_subject(const PhantomConfig& cfg, int subject_id) {
  validate(cfg);
  const std::vector<OrganTemplate> organs = build_template(cfg);

  Rng rng(cfg.seed, static_cast<std::uint64_t>(subject_id) + 1);
  const int shift_max = static_cast<int>(std::llround(cfg.global_shift_range));
  std::array<int, 3> shift{};
  for (int& s : shift)
    s = static_cast<int>(rng.uniform_int(-shift_max, shift_max));

  Subject subject;
  subject.provenance.seed = cfg.seed;
  subject.provenance.subject_id = subject_id;
  subject.provenance.global_shift = shift;

  ScalarVolume& img = subject.image;
  img.dims = cfg.dims;
  img.data.assign(img.voxel_count(), 0.0f);
  LabelVolume& seg = subject.labels;
  seg.dims = cfg.dims;
  seg.num_labels = cfg.num_organs;
  seg.data.assign(seg.voxel_count(), 0);

  for (const OrganTemplate& organ : organs) {
    OrganPlacement placed;
    placed.label = organ.label;
    placed.semi_axes = organ.semi_axes;
    placed.intensity = organ.intensity;
    for (int d = 0; d < 3; ++d)
      placed.center[d] = organ.center[d] +
                         rng.uniform(-cfg.subject_jitter, cfg.subject_jitter) +
                         shift[d];
    subject.provenance.organs.push_back(placed);

    std::array<int, 3> lo, hi;
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::max(0, static_cast<int>(std::floor(placed.center[d] -
                                                      placed.semi_axes[d])));
      hi[d] = std::min(cfg.dims[d] - 1,
                       static_cast<int>(std::ceil(placed.center[d] +
                                                  placed.semi_axes[d])));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const double ex = (x - placed.center[0]) / placed.semi_axes[0];
          const double ey = (y - placed.center[1]) / placed.semi_axes[1];
          const double ez = (z - placed.center[2]) / placed.semi_axes[2];
          if (ex * ex + ey * ey + ez * ez > 1.0) continue;
          std::int32_t& cell = seg.at(x, y, z);
          if (cell != 0)
            throw input_error("phantom: organs " + std::to_string(cell) + " and " +
                              std::to_string(organ.label) + " overlap");
          cell = organ.label;
          img.at(x, y, z) += organ.intensity;
        }

    // Texture moves with the global shift only, not the per-organ jitter:
    // matched texture keypoints then agree on a single translation per
    // subject pair while the masks move relative to them.
    for (const PhantomBlob& blob : organ.blobs) {
      const std::array<int, 3> c = {blob.center[0] + shift[0],
                                    blob.center[1] + shift[1],
                                    blob.center[2] + shift[2]};
      const int r = static_cast<int>(std::ceil(3.0 * blob.sigma));
      const double inv2s2 = 1.0 / (2.0 * blob.sigma * blob.sigma);
      for (int z = std::max(0, c[2] - r); z <= std::min(cfg.dims[2] - 1, c[2] + r); ++z)
        for (int y = std::max(0, c[1] - r); y <= std::min(cfg.dims[1] - 1, c[1] + r); ++y)
          for (int x = std::max(0, c[0] - r); x <= std::min(cfg.dims[0] - 1, c[0] + r); ++x) {
            const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
            img.at(x, y, z) +=
                blob.amplitude * std::exp(-(dx * dx + dy * dy + dz * dz) * inv2s2);
          }
    }
  }

  if (cfg.noise_sigma > 0.0)
    for (double& v : img.data) v += rng.normal(0.0, cfg.noise_sigma);

  // Snap to float32 so a written subject reads back as the in-memory values.
  for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));

  return subject;
}

Subject crop_fov(const Subject& subject, int organ_label, int margin) {
  const LabelVolume& seg = subject.labels;
  std::array<int, 3> lo = seg.dims;
  std::array<int, 3> hi{-1, -1, -1};
  for (int z = 0; z < seg.dims[2]; ++z)
    for (int y = 0; y < seg.dims[1]; ++y)
      for (int x = 0; x < seg.dims[0]; ++x)
        if (seg.at(x, y, z) == organ_label) {
          lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
          hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
        }
  if (hi[0] < 0)
    throw input_error("crop_fov: organ " + std::to_string(organ_label) +
                      " has no voxels");

  std::array<int, 3> clo, chi;
  for (int d = 0; d < 3; ++d) {
    clo[d] = std::max(0, lo[d] - margin);
    chi[d] = std::min(seg.dims[d], hi[d] + margin + 1);
  }

  Subject out;
  out.image = crop(subject.image, clo, chi);
  out.labels = crop(subject.labels, clo, chi);
  out.provenance = subject.provenance;
  for (int d = 0; d < 3; ++d) out.provenance.crop_offset[d] += clo[d];
  return out;
}

}  // namespace kts
