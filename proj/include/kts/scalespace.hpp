#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "kts/volume.hpp"

namespace kts {

struct ScaleSpaceConfig {
  double sigma0 = 1.6;              // base scale, voxels
  double kappa = std::cbrt(2.0);    // multiplicative scale sampling rate
  int levels_per_octave = 3;
  int num_octaves = 3;
  // Absolute DoG magnitude threshold. When unset it is derived per image as
  // contrast_relative * (max - min) of the input intensities.
  std::optional<double> contrast_threshold;
  double contrast_relative = 0.005;
};

// Scale-space extremum at base-resolution coordinates.
struct Keypoint {
  std::array<double, 3> x{0, 0, 0};  // voxels, base grid
  double sigma = 0.0;                // voxels, base grid
  double dog_value = 0.0;            // signed extremum response
  // Provenance within the stack (not serialized).
  int octave = 0;
  int level = 0;                     // DoG level index within the octave
  std::array<int, 3> grid{0, 0, 0};  // voxel index on the octave grid
};

struct GaussianLevel {
  double sigma;  // effective blur in base-grid voxels
  ScalarVolume vol;
};

struct OctaveStack {
  int octave = 0;
  int scale = 1;                     // grid step in base voxels (2^octave)
  std::vector<GaussianLevel> gauss;  // levels_per_octave + 3 levels
  std::vector<ScalarVolume> dog;     // gauss[k+1] - gauss[k]
};

// Separable FIR Gaussian, kernel truncated at 3*sigma, replicated borders.
ScalarVolume gaussian_smooth(const ScalarVolume& vol, double sigma);

// Gaussian/DoG pyramid. Level k of octave o has effective blur
// sigma0 * kappa^k * 2^o relative to the input; increments are composed so
// variances add, and each octave is downsampled by two after
// levels_per_octave levels.
std::vector<OctaveStack> build_scale_space(const ScalarVolume& vol,
                                           const ScaleSpaceConfig& cfg);

// Strict 80-neighbor extrema of the DoG stack with |value| > threshold.
// The outermost voxel shell and the first/last DoG level of each octave are
// excluded. Ordering: octave, then level, then linear voxel index.
std::vector<Keypoint> detect_keypoints(const std::vector<OctaveStack>& stack,
                                       double threshold);
std::vector<Keypoint> detect_keypoints(const ScalarVolume& vol,
                                       const ScaleSpaceConfig& cfg);

// The threshold detect_keypoints actually applies for this input.
double effective_contrast_threshold(const ScalarVolume& vol,
                                    const ScaleSpaceConfig& cfg);

}  // namespace kts
