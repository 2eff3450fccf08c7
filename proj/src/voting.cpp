#include "kts/voting.hpp"

#include <cmath>

namespace kts {

LabelPosterior vote_label(std::span<const Match> matches,
                          std::span<const int> match_labels, int num_labels) {
  LabelPosterior post;
  post.scores.assign(num_labels, 0.0);
  if (matches.empty()) return post;

  double tau_sq = 0.0;
  for (const Match& m : matches)
    tau_sq = std::max(tau_sq, m.desc_dist * m.desc_dist);
  post.tau_sq = tau_sq;

  for (std::size_t i = 0; i < matches.size(); ++i) {
    const int label = match_labels[i];
    if (label < 1 || label > num_labels) continue;
    // Identical-descriptor limit: Eq. 5's Gaussian is undefined at tau = 0,
    // so the likelihood is taken constant and the vote reduces to p(m).
    double keypoint_likelihood = 1.0;
    if (tau_sq > 0.0) {
      keypoint_likelihood =
          std::exp(-(matches[i].desc_dist * matches[i].desc_dist) / (2.0 * tau_sq)) /
          std::sqrt(2.0 * M_PI * tau_sq);
    }
    post.scores[label - 1] += keypoint_likelihood * matches[i].p_m;
  }

  int best = -1;
  for (int l = 0; l < num_labels; ++l)
    if (post.scores[l] > 0.0 && (best < 0 || post.scores[l] > post.scores[best]))
      best = l;
  if (best >= 0) post.voted_label = best + 1;
  return post;
}

std::vector<LabelPosterior> vote_all(
    std::span<const std::vector<Match>> matches_per_image,
    std::span<const std::vector<DescribedKeypoint>> train_kps, int num_test_kps,
    int num_labels) {
  // Gather matches per test keypoint, ordered by training image.
  std::vector<std::vector<Match>> by_kp(num_test_kps);
  std::vector<std::vector<int>> labels_by_kp(num_test_kps);
  for (const auto& matches : matches_per_image)
    for (const Match& m : matches) {
      by_kp[m.test_index].push_back(m);
      labels_by_kp[m.test_index].push_back(
          train_kps[m.train_image][m.train_index].label);
    }

  std::vector<LabelPosterior> out;
  out.reserve(num_test_kps);
  for (int i = 0; i < num_test_kps; ++i)
    out.push_back(vote_label(by_kp[i], labels_by_kp[i], num_labels));
  return out;
}

}  // namespace kts
