#pragma once

#include <span>
#include <string>
#include <vector>

#include "kts/eval.hpp"
#include "kts/matching.hpp"
#include "kts/phantom.hpp"
#include "kts/transfer.hpp"

namespace kts {

// Whole-pipeline configuration, serialized as one JSON document. Unknown
// keys are rejected; an empty document reproduces every default.
struct PipelineConfig {
  ScaleSpaceConfig scale_space;
  DescriptorConfig descriptor;
  MatchingConfig matching;
  TransferConfig transfer;
  PhantomConfig phantom;
  int threads = 1;

  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig load(const std::string& path);  // "" -> defaults
  std::string to_json_text() const;
};

struct SegmentOutput {
  SegmentationResult result;
  std::vector<DescribedKeypoint> test_keypoints;
  std::vector<std::vector<Match>> matches_per_image;  // indexed by training case
  std::vector<LabelPosterior> votes;
  StageTimings timings;
  int num_labels = 0;
};

// Extract test keypoints, match each training image, vote, transfer.
// Training keypoints are taken as given (the per-scan preparation is their
// extraction, done once). Thread count never changes the output.
SegmentOutput segment_volume(const ScalarVolume& test,
                             std::span<const TrainingCase> training,
                             const PipelineConfig& cfg);

// extract + assign_labels for one subject, as staged for a training set.
TrainingCase prepare_training_case(const ScalarVolume& image, const LabelVolume& labels,
                                   const PipelineConfig& cfg);

}  // namespace kts
