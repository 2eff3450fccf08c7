#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "kts/descriptor.hpp"

namespace kts {

struct MatchingConfig {
  double eps_sigma = 2.0;             // scale-ratio gate
  double ratio_threshold = 0.9;       // nearest/second-nearest rejection
  int hough_bins = 10;                // bins per axis for translation voting
  double spatial_keep_fraction = 0.10;  // residual quantile defining eps_x
  double kde_sigma = 0.2;             // kernel width in normalized translation units
};

// One (test keypoint, training keypoint) pair for a given training image.
struct Match {
  int test_index = -1;
  int train_index = -1;
  int train_image = -1;
  double desc_dist = 0.0;
  std::array<double, 3> translation{0, 0, 0};  // test position - training position
  double p_m = 0.0;  // translational-consistency weight, filled by the KDE
};

double descriptor_distance(const Descriptor64& a, const Descriptor64& b);

// Stage 1: per test keypoint, nearest descriptor neighbor among training
// keypoints passing the scale-ratio gate; kept when the distance ratio to
// the second-nearest candidate is <= ratio_threshold. Fewer than two
// candidates, or a zero second-nearest distance, produce no match.
std::vector<Match> stage1_match(std::span<const DescribedKeypoint> test_kps,
                                std::span<const DescribedKeypoint> train_kps,
                                int train_image, const MatchingConfig& cfg);

// Mode of the translation votes: hough_bins^3 histogram over the bounding
// box, maximal-count bin (ties to the lowest linear index), mean of the
// translations in that bin. nullopt for an empty match list.
std::optional<std::array<double, 3>> hough_translation(std::span<const Match> matches,
                                                       const MatchingConfig& cfg);

// The spatial gate stage 2 applies: the spatial_keep_fraction quantile of
// the stage-1 residuals ||translation - t||.
double spatial_tolerance(std::span<const Match> stage1, const std::array<double, 3>& t,
                         const MatchingConfig& cfg);

// Stage 2: stage-1 search with candidates further restricted to
// ||translation - t|| <= eps_x. A single surviving candidate is accepted
// without a ratio test; with two or more, the ratio test is re-applied
// within the restricted set.
std::vector<Match> stage2_match(std::span<const DescribedKeypoint> test_kps,
                                std::span<const DescribedKeypoint> train_kps,
                                int train_image, const std::array<double, 3>& t,
                                double eps_x, const MatchingConfig& cfg);

// Per-training-image KDE over match translations. Translations are
// normalized per axis to [0,1] over their bounding box (constant axes map
// to 0.5), densities use an isotropic Gaussian kernel of width kde_sigma,
// and p_m is normalized to sum to 1 over the image's matches.
void estimate_match_distribution(std::vector<Match>& matches,
                                 const MatchingConfig& cfg);

// stage1 -> Hough -> stage2 -> KDE for one training image. `aligned` is
// false when stage 1 produced nothing and the image is skipped.
struct ImageMatchResult {
  int train_image = -1;
  bool aligned = false;
  std::array<double, 3> translation{0, 0, 0};
  double eps_x = 0.0;
  std::vector<Match> matches;
};

ImageMatchResult match_training_image(std::span<const DescribedKeypoint> test_kps,
                                      std::span<const DescribedKeypoint> train_kps,
                                      int train_image, const MatchingConfig& cfg);

void write_matches_csv(const std::string& path,
                       std::span<const std::vector<Match>> matches_per_image);

}  // namespace kts
