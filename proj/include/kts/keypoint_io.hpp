#pragma once

#include <span>
#include <string>
#include <vector>

#include "kts/descriptor.hpp"
#include "kts/voting.hpp"

namespace kts {

// Keypoint interchange file: CSV with header
//   x,y,z,sigma,dog_value,label,d0,...,d63
// label is -1 for unlabeled (test) keypoints. Numbers are printed with
// enough digits that a read round-trips bit-exactly.
void write_keypoints_csv(const std::string& path,
                         std::span<const DescribedKeypoint> kps);
std::vector<DescribedKeypoint> read_keypoints_csv(const std::string& path);

// Same columns plus voted_label (-1 when unvoted) and the per-label scores
// s1..sN. Written after voting for inspection.
void write_voted_keypoints_csv(const std::string& path,
                               std::span<const DescribedKeypoint> kps,
                               std::span<const LabelPosterior> votes,
                               int num_labels);

}  // namespace kts
