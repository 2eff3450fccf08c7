#pragma once

#include <optional>
#include <span>
#include <vector>

#include "kts/matching.hpp"

namespace kts {

// Unnormalized joint scores p(L = l, F, labels, training keypoints) for one
// test keypoint, marginalized over its matches.
struct LabelPosterior {
  std::vector<double> scores;          // index l-1, size num_labels
  std::optional<int> voted_label;      // argmax, ties to lowest label; nullopt
                                       // when the keypoint has no matches
  double tau_sq = 0.0;                 // max over matches of desc_dist^2

  // Posterior normalized over labels; 0 when there are no matches.
  double posterior(int label) const {
    double total = 0.0;
    for (double s : scores) total += s;
    return total > 0.0 ? scores[label - 1] / total : 0.0;
  }
};

// match_labels[i] is the training-keypoint label of matches[i]. Each match
// contributes p(F | m) * p(m) to its label's score, with p(F | m) the
// Gaussian descriptor likelihood of width tau; tau_sq == 0 (all matched
// descriptors identical) degenerates to a constant likelihood.
LabelPosterior vote_label(std::span<const Match> matches,
                          std::span<const int> match_labels, int num_labels);

// Votes for every test keypoint, gathering each keypoint's matches across
// all training images. train_kps is indexed by train_image.
std::vector<LabelPosterior> vote_all(
    std::span<const std::vector<Match>> matches_per_image,
    std::span<const std::vector<DescribedKeypoint>> train_kps, int num_test_kps,
    int num_labels);

}  // namespace kts
