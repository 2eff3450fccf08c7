#pragma once

#include <map>
#include <span>
#include <vector>

#include "kts/voting.hpp"

namespace kts {

struct TransferConfig {
  double nu_default = 50.0;           // intensity noise scale
  std::map<int, double> nu_override;  // per-label nu
  double background_threshold = 0.15;
  // Keypoint label -> labels whose masks that keypoint may transfer.
  // Labels without an entry transfer exactly their own mask; an explicit
  // empty set disables transfer for that keypoint label.
  std::map<int, std::vector<int>> cross_label;

  double nu(int label) const {
    auto it = nu_override.find(label);
    return it != nu_override.end() ? it->second : nu_default;
  }
};

struct ProbabilityMaps {
  std::vector<ScalarVolume> maps;  // index l-1; geometry of the test image
  std::vector<double> z_norm;      // accumulated p(L) * p(m) mass per label
};

struct SegmentationResult {
  LabelVolume labels;
  ProbabilityMaps probability_maps;
  long transfer_events = 0;
};

// One training subject: image, its segmentation, and its labeled keypoints.
struct TrainingCase {
  ScalarVolume image;
  LabelVolume labels;
  std::vector<DescribedKeypoint> keypoints;
};

// Algorithm: every match whose voted test label is transfer-compatible with
// its training keypoint label shifts the training masks of the compatible
// labels by the rounded match translation, weighting each in-bounds voxel by
// the intensity-agreement Gaussian exp(-(I - I_train)^2 / (2 nu^2)) and by
// p(L = voted) * p(m). Final labeling: argmax of the accumulated maps where
// the z-normalized maximum reaches background_threshold, else background.
// Accumulation order is training image, then test keypoint; results are
// independent of any caller-side threading.
SegmentationResult transfer_segmentation(
    const ScalarVolume& test, std::span<const LabelPosterior> votes,
    std::span<const TrainingCase> training,
    std::span<const std::vector<Match>> matches_per_image,
    const TransferConfig& cfg, int num_labels);

}  // namespace kts
