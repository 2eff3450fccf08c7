#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kts/scalespace.hpp"
#include "kts/volume.hpp"

namespace kts {

// 8 spatial octants x 8 gradient-sign octants, L2-normalized and clipped.
using Descriptor64 = std::array<float, 64>;

struct DescriptorConfig {
  double support_factor = 8.0;       // cube edge = support_factor * sigma
  double weight_sigma_factor = 2.0;  // spatial Gaussian weight sigma = factor * sigma
  double clip_threshold = 0.2;
};

constexpr int kNoLabel = -1;

struct DescribedKeypoint {
  Keypoint kp;
  Descriptor64 descriptor{};
  int label = kNoLabel;  // organ label for training keypoints, kNoLabel otherwise
};

double l2_norm(const Descriptor64& d);

// Normalize to unit L2 norm, cap components at clip_threshold, renormalize;
// repeated until the cap no longer changes anything, so the operation is
// idempotent. All-zero input is returned unchanged.
Descriptor64 clip_renormalize(const Descriptor64& d, double clip_threshold = 0.2);

// True when the support cube plus the one-voxel central-difference margin
// lies inside the volume.
bool descriptor_support_inside(const ScalarVolume& vol, const Keypoint& kp,
                               const DescriptorConfig& cfg);

// Gradient-orientation histogram over a cube of edge support_factor*sigma on
// the base grid of `smoothed` (the input smoothed to the keypoint's sigma).
// nullopt when the support leaves the volume or all gradients vanish.
std::optional<Descriptor64> descriptor_from_smoothed(const ScalarVolume& smoothed,
                                                     const Keypoint& kp,
                                                     const DescriptorConfig& cfg);

// Convenience wrapper that smooths `vol` to kp.sigma first.
std::optional<Descriptor64> compute_descriptor(const ScalarVolume& vol,
                                               const Keypoint& kp,
                                               const DescriptorConfig& cfg);

// Caches the per-sigma smoothed copies of one volume across keypoints.
class DescriptorExtractor {
 public:
  DescriptorExtractor(const ScalarVolume& vol, DescriptorConfig cfg)
      : vol_(vol), cfg_(cfg) {}

  std::optional<Descriptor64> describe(const Keypoint& kp);

 private:
  const ScalarVolume& vol_;
  DescriptorConfig cfg_;
  std::map<double, ScalarVolume> smoothed_;
};

// detect + describe, dropping keypoints whose support leaves the volume or
// whose gradients vanish. Output order follows detection order.
std::vector<DescribedKeypoint> extract_keypoints(const ScalarVolume& vol,
                                                 const ScaleSpaceConfig& sscfg,
                                                 const DescriptorConfig& dcfg,
                                                 int threads = 1);

// Label keypoints from a segmentation: label = seg at round(kp.x); keypoints
// landing on background (0) are removed, order is preserved.
std::vector<DescribedKeypoint> assign_labels(std::span<const DescribedKeypoint> kps,
                                             const LabelVolume& seg);

}  // namespace kts
