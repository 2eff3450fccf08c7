#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kts/volume.hpp"

namespace kts {

// Synthetic multi-subject corpus: textured ellipsoid "organs" on a shared
// template. Subjects differ by a per-organ center jitter, an integer global
// shift, and voxel noise. Texture blobs are anchored to the template plus
// the global shift only, so correct matches across subjects agree on one
// translation while the organ masks move relative to the texture.
struct PhantomConfig {
  std::array<int, 3> dims{96, 96, 96};
  int num_organs = 6;
  std::uint64_t seed = 0;
  double subject_jitter = 3.0;      // per-organ center jitter, voxels
  double global_shift_range = 10.0; // integer shift drawn in [-range, range]
  double noise_sigma = 2.0;         // additive intensity noise
  int texture_blob_count = 8;       // per organ
  int quiet_organ = 0;              // label rendered at background intensity
                                    // with no texture (0 disables)
};

struct PhantomBlob {
  std::array<int, 3> center{0, 0, 0};  // template coordinates, integer
  double sigma = 0.0;
  double amplitude = 0.0;
};

struct OrganPlacement {
  int label = 0;
  std::array<double, 3> center{0, 0, 0};  // after jitter and global shift
  std::array<double, 3> semi_axes{0, 0, 0};
  double intensity = 0.0;
};

struct SubjectProvenance {
  std::uint64_t seed = 0;
  int subject_id = 0;
  std::array<int, 3> global_shift{0, 0, 0};
  std::vector<OrganPlacement> organs;
  std::array<int, 3> crop_offset{0, 0, 0};  // set by crop_fov
};

struct Subject {
  ScalarVolume image;
  LabelVolume labels;
  SubjectProvenance provenance;
};

// Deterministic in (cfg.seed, subject_id). Throws input_error when the
// configuration cannot guarantee disjoint, fully interior organs.
Subject generate_subject(const PhantomConfig& cfg, int subject_id);

// Crop to the organ's bounding box dilated by `margin` voxels (clamped to
// the volume). Errors when the organ has no voxels.
Subject crop_fov(const Subject& subject, int organ_label, int margin = 10);

}  // namespace kts
