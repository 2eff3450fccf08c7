#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is written directly from the definitions (dense loops,
// exhaustive scans) and stays independent of the library's code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "kts/matching.hpp"
#include "kts/scalespace.hpp"
#include "kts/volume.hpp"

namespace oracle {

// Analytic 3D Gaussian density sampled at the octave grid of `like`,
// centered at base-grid position c.
inline kts::ScalarVolume sampled_gaussian(const kts::ScalarVolume& like, int grid_step,
                                          const std::array<double, 3>& c,
                                          double sigma) {
  kts::ScalarVolume g = like;
  const double norm = std::pow(2.0 * M_PI * sigma * sigma, -1.5);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const double dx = x * grid_step - c[0];
        const double dy = y * grid_step - c[1];
        const double dz = z * grid_step - c[2];
        g.at(x, y, z) = static_cast<float>(
            norm * std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma)));
      }
  return g;
}

// Dense (non-separable) convolution with a sampled Gaussian kernel,
// truncated at 3 sigma, replicated borders.
inline kts::ScalarVolume dense_gaussian_convolution(const kts::ScalarVolume& vol,
                                                    double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel;
  double sum = 0.0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double w =
            std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma));
        kernel.push_back(w);
        sum += w;
      }
  for (double& w : kernel) w /= sum;

  kts::ScalarVolume out = vol;
  for (int z = 0; z < vol.dims[2]; ++z)
    for (int y = 0; y < vol.dims[1]; ++y)
      for (int x = 0; x < vol.dims[0]; ++x) {
        double acc = 0.0;
        std::size_t k = 0;
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int sx = std::clamp(x + dx, 0, vol.dims[0] - 1);
              const int sy = std::clamp(y + dy, 0, vol.dims[1] - 1);
              const int sz = std::clamp(z + dz, 0, vol.dims[2] - 1);
              acc += kernel[k++] * vol.at(sx, sy, sz);
            }
        out.at(x, y, z) = static_cast<float>(acc);
      }
  return out;
}

inline double relative_l2(const kts::ScalarVolume& a, const kts::ScalarVolume& b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    diff += d * d;
    ref += double(b.data[i]) * double(b.data[i]);
  }
  return std::sqrt(diff / ref);
}

// Exhaustive 80-neighbor scan of a DoG stack: strict maxima/minima on
// interior voxels of interior levels, |value| above threshold.
inline std::vector<kts::Keypoint> scan_extrema(const std::vector<kts::OctaveStack>& stack,
                                               double threshold) {
  std::vector<kts::Keypoint> found;
  for (const kts::OctaveStack& oct : stack) {
    const int s = static_cast<int>(oct.dog.size()) - 2;
    const auto& dims = oct.dog[0].dims;
    for (int level = 1; level <= s; ++level)
      for (int z = 1; z + 1 < dims[2]; ++z)
        for (int y = 1; y + 1 < dims[1]; ++y)
          for (int x = 1; x + 1 < dims[0]; ++x) {
            const float v = oct.dog[level].at(x, y, z);
            if (!(std::abs(v) > threshold)) continue;
            int greater = 0, less = 0;
            for (int dl = -1; dl <= 1; ++dl)
              for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                  for (int dx = -1; dx <= 1; ++dx) {
                    if (dl == 0 && dx == 0 && dy == 0 && dz == 0) continue;
                    const float n = oct.dog[level + dl].at(x + dx, y + dy, z + dz);
                    if (n > v) ++greater;
                    if (n < v) ++less;
                  }
            if (greater == 80 || less == 80) {
              kts::Keypoint kp;
              kp.grid = {x, y, z};
              kp.octave = oct.octave;
              kp.level = level;
              kp.x = {double(x) * oct.scale, double(y) * oct.scale,
                      double(z) * oct.scale};
              kp.sigma = oct.gauss[level].sigma;
              kp.dog_value = v;
              found.push_back(kp);
            }
          }
  }
  return found;
}

// Plain nearest-neighbor matcher written from the constraint definitions.
inline std::vector<kts::Match> brute_force_match(
    std::span<const kts::DescribedKeypoint> test,
    std::span<const kts::DescribedKeypoint> train, int train_image,
    const kts::MatchingConfig& cfg,
    const std::optional<std::array<double, 3>>& t = std::nullopt,
    double eps_x = 0.0) {
  std::vector<kts::Match> out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<std::pair<double, int>> cands;
    for (std::size_t j = 0; j < train.size(); ++j) {
      const double ratio = test[i].kp.sigma / train[j].kp.sigma;
      if (ratio < 1.0 / cfg.eps_sigma || ratio > cfg.eps_sigma) continue;
      if (t) {
        double r2 = 0.0;
        for (int d = 0; d < 3; ++d) {
          const double dd = test[i].kp.x[d] - train[j].kp.x[d] - (*t)[d];
          r2 += dd * dd;
        }
        if (std::sqrt(r2) > eps_x) continue;
      }
      double d2 = 0.0;
      for (int k = 0; k < 64; ++k) {
        const double d =
            double(test[i].descriptor[k]) - double(train[j].descriptor[k]);
        d2 += d * d;
      }
      cands.push_back({std::sqrt(d2), static_cast<int>(j)});
    }
    if (cands.empty()) continue;
    std::stable_sort(cands.begin(), cands.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (cands.size() < 2) {
      if (!t) continue;  // stage 1 needs a second neighbor
    } else {
      if (cands[1].first == 0.0) continue;
      if (cands[0].first / cands[1].first > cfg.ratio_threshold) continue;
    }
    kts::Match m;
    m.test_index = static_cast<int>(i);
    m.train_index = cands[0].second;
    m.train_image = train_image;
    m.desc_dist = cands[0].first;
    for (int d = 0; d < 3; ++d)
      m.translation[d] = test[i].kp.x[d] - train[m.train_index].kp.x[d];
    out.push_back(m);
  }
  return out;
}

// Hough mode by explicit bin counting.
inline std::array<double, 3> hough_mode(std::span<const kts::Match> matches, int bins) {
  std::array<double, 3> lo{}, hi{};
  for (int d = 0; d < 3; ++d) {
    lo[d] = hi[d] = matches[0].translation[d];
    for (const auto& m : matches) {
      lo[d] = std::min(lo[d], m.translation[d]);
      hi[d] = std::max(hi[d], m.translation[d]);
    }
  }
  std::map<std::array<int, 3>, std::vector<const kts::Match*>> cells;
  for (const auto& m : matches) {
    std::array<int, 3> idx{};
    for (int d = 0; d < 3; ++d) {
      const double w = hi[d] - lo[d];
      idx[d] = w > 0 ? std::clamp(int((m.translation[d] - lo[d]) / w * bins), 0,
                                  bins - 1)
                     : 0;
    }
    cells[idx].push_back(&m);
  }
  std::array<int, 3> best{};
  std::size_t best_count = 0;
  long best_linear = -1;
  for (const auto& [idx, v] : cells) {
    const long linear = idx[0] + bins * (long(idx[1]) + bins * long(idx[2]));
    if (v.size() > best_count ||
        (v.size() == best_count && linear < best_linear)) {
      best = idx;
      best_count = v.size();
      best_linear = linear;
    }
  }
  std::array<double, 3> mean{};
  for (const kts::Match* m : cells[best])
    for (int d = 0; d < 3; ++d) mean[d] += m->translation[d];
  for (int d = 0; d < 3; ++d) mean[d] /= double(best_count);
  return mean;
}

// Direct KDE evaluation on normalized translations.
inline std::vector<double> kde_weights(const std::vector<std::array<double, 3>>& t,
                                       double h) {
  const std::size_t n = t.size();
  std::array<double, 3> lo = t[0], hi = t[0];
  for (const auto& v : t)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], v[d]);
      hi[d] = std::max(hi[d], v[d]);
    }
  std::vector<std::array<double, 3>> u(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d)
      u[i][d] = hi[d] > lo[d] ? (t[i][d] - lo[d]) / (hi[d] - lo[d]) : 0.5;
  std::vector<double> dens(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double dd = u[i][d] - u[j][d];
        r2 += dd * dd;
      }
      dens[i] += std::exp(-r2 / (2.0 * h * h));
    }
    dens[i] /= double(n);
    total += dens[i];
  }
  for (double& v : dens) v /= total;
  return dens;
}

// Majority vote with ties to the lowest label; 0 means no votes.
inline int majority_vote(std::span<const int> labels, int num_labels) {
  std::vector<int> counts(num_labels + 1, 0);
  for (int l : labels)
    if (l >= 1 && l <= num_labels) ++counts[l];
  int best = 0;
  for (int l = 1; l <= num_labels; ++l)
    if (counts[l] > (best == 0 ? 0 : counts[best])) best = l;
  return best;
}

// Voxel count of an ellipsoid rasterized on the integer grid.
inline long ellipsoid_voxel_count(const std::array<int, 3>& dims,
                                  const std::array<double, 3>& c,
                                  const std::array<double, 3>& a) {
  long count = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const double ex = (x - c[0]) / a[0];
        const double ey = (y - c[1]) / a[1];
        const double ez = (z - c[2]) / a[2];
        if (ex * ex + ey * ey + ez * ez <= 1.0) ++count;
      }
  return count;
}

}  // namespace oracle
