#include "kts/transfer.hpp"

#include <algorithm>
#include <cmath>

namespace kts {

namespace {

// Voxel lists per label for one training segmentation, so each transfer
// touches only its mask instead of rescanning the volume.
std::vector<std::vector<std::array<int, 3>>> mask_voxels(const LabelVolume& seg,
                                                         int num_labels) {
  std::vector<std::vector<std::array<int, 3>>> voxels(num_labels + 1);
  for (int z = 0; z < seg.dims[2]; ++z)
    for (int y = 0; y < seg.dims[1]; ++y)
      for (int x = 0; x < seg.dims[0]; ++x) {
        const std::int32_t l = seg.at(x, y, z);
        if (l > 0 && l <= num_labels) voxels[l].push_back({x, y, z});
      }
  return voxels;
}

}  // namespace

SegmentationResult transfer_segmentation(
    const ScalarVolume& test, std::span<const LabelPosterior> votes,
    std::span<const TrainingCase> training,
    std::span<const std::vector<Match>> matches_per_image,
    const TransferConfig& cfg, int num_labels) {
  const std::size_t n = test.voxel_count();
  std::vector<std::vector<double>> maps(num_labels, std::vector<double>(n, 0.0));
  std::vector<double> z_norm(num_labels, 0.0);
  long events = 0;

  for (std::size_t i = 0; i < training.size(); ++i) {
    if (i >= matches_per_image.size()) break;
    const TrainingCase& tc = training[i];
    const auto voxels = mask_voxels(tc.labels, num_labels);

    for (const Match& m : matches_per_image[i]) {
      const LabelPosterior& vote = votes[m.test_index];
      if (!vote.voted_label) continue;
      const int voted = *vote.voted_label;
      const int train_label = tc.keypoints[m.train_index].label;

      // Default guard: voted == training keypoint label. A cross_label entry
      // replaces the transferable set for that keypoint label.
      auto it = cfg.cross_label.find(train_label);
      const std::vector<int> identity{train_label};
      const std::vector<int>& transferable =
          it != cfg.cross_label.end() ? it->second : identity;
      if (std::find(transferable.begin(), transferable.end(), voted) ==
          transferable.end())
        continue;

      const double weight = vote.posterior(voted) * m.p_m;
      const std::array<int, 3> shift = {
          static_cast<int>(std::llround(m.translation[0])),
          static_cast<int>(std::llround(m.translation[1])),
          static_cast<int>(std::llround(m.translation[2]))};

      for (const int l : transferable) {
        if (l < 1 || l > num_labels) continue;
        const double inv2nu2 = 1.0 / (2.0 * cfg.nu(l) * cfg.nu(l));
        bool touched = false;
        std::vector<double>& map = maps[l - 1];
        for (const auto& v : voxels[l]) {
          const int x = v[0] + shift[0];
          const int y = v[1] + shift[1];
          const int z = v[2] + shift[2];
          if (!test.inside(x, y, z)) continue;
          touched = true;
          const double diff = static_cast<double>(test.at(x, y, z)) -
                              static_cast<double>(tc.image.at(v[0], v[1], v[2]));
          map[test.index(x, y, z)] += std::exp(-diff * diff * inv2nu2) * weight;
        }
        // A shifted mask that lands entirely out of bounds (or is empty)
        // contributes nothing, including to the normalizer.
        if (touched) {
          z_norm[l - 1] += weight;
          ++events;
        }
      }
    }
  }

  SegmentationResult res;
  res.transfer_events = events;
  res.labels.dims = test.dims;
  res.labels.spacing = test.spacing;
  res.labels.origin = test.origin;
  res.labels.num_labels = num_labels;
  res.labels.data.assign(n, 0);

  for (std::size_t v = 0; v < n; ++v) {
    int argmax = -1;
    double best = 0.0, best_q = 0.0;
    for (int l = 0; l < num_labels; ++l) {
      const double s = maps[l][v];
      if (s > best) {
        best = s;
        argmax = l;
      }
      const double q = z_norm[l] > 0.0 ? s / z_norm[l] : 0.0;
      best_q = std::max(best_q, q);
    }
    if (argmax >= 0 && best_q >= cfg.background_threshold)
      res.labels.data[v] = argmax + 1;
  }

  res.probability_maps.z_norm = z_norm;
  res.probability_maps.maps.resize(num_labels);
  for (int l = 0; l < num_labels; ++l) {
    ScalarVolume& mv = res.probability_maps.maps[l];
    mv.dims = test.dims;
    mv.spacing = test.spacing;
    mv.origin = test.origin;
    mv.data = std::move(maps[l]);
  }
  return res;
}

}  // namespace kts
