#include "kts/descriptor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <thread>

namespace kts {

double l2_norm(const Descriptor64& d) {
  double s = 0.0;
  for (float v : d) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

namespace {

// Double-precision clip-renormalize on a raw histogram. Iterates to a fixed
// point: either all components end up at or below the cap, or only equal
// above-cap spikes remain (a cycle the cap cannot resolve).
void clip_renormalize_raw(std::array<double, 64>& h, double cap) {
  double norm2 = 0.0;
  for (double v : h) norm2 += v * v;
  if (norm2 == 0.0) return;
  double norm = std::sqrt(norm2);
  for (double& v : h) v /= norm;

  std::array<double, 64> prev_state = h;
  for (int iter = 0; iter < 100; ++iter) {
    bool clipped = false;
    for (double& v : h)
      if (v > cap) {
        v = cap;
        clipped = true;
      }
    if (!clipped) break;
    norm2 = 0.0;
    for (double v : h) norm2 += v * v;
    norm = std::sqrt(norm2);
    for (double& v : h) v /= norm;
    double drift = 0.0;
    for (int i = 0; i < 64; ++i) drift = std::max(drift, std::abs(h[i] - prev_state[i]));
    if (iter > 0 && drift < 1e-15) break;  // period-1 cycle: equal spikes
    prev_state = h;
  }
}

}  // namespace

Descriptor64 clip_renormalize(const Descriptor64& d, double clip_threshold) {
  std::array<double, 64> h;
  for (int i = 0; i < 64; ++i) h[i] = d[i];
  clip_renormalize_raw(h, clip_threshold);
  Descriptor64 out;
  for (int i = 0; i < 64; ++i) out[i] = static_cast<float>(h[i]);
  return out;
}

bool descriptor_support_inside(const ScalarVolume& vol, const Keypoint& kp,
                               const DescriptorConfig& cfg) {
  const double half = cfg.support_factor * kp.sigma / 2.0;
  for (int d = 0; d < 3; ++d) {
    const int lo = static_cast<int>(std::ceil(kp.x[d] - half));
    const int hi = static_cast<int>(std::floor(kp.x[d] + half));
    if (lo - 1 < 0 || hi + 1 > vol.dims[d] - 1 || lo > hi) return false;
  }
  return true;
}

std::optional<Descriptor64> descriptor_from_smoothed(const ScalarVolume& smoothed,
                                                     const Keypoint& kp,
                                                     const DescriptorConfig& cfg) {
  if (!descriptor_support_inside(smoothed, kp, cfg)) return std::nullopt;

  const double half = cfg.support_factor * kp.sigma / 2.0;
  const double wsigma = cfg.weight_sigma_factor * kp.sigma;
  std::array<int, 3> lo, hi;
  for (int d = 0; d < 3; ++d) {
    lo[d] = static_cast<int>(std::ceil(kp.x[d] - half));
    hi[d] = static_cast<int>(std::floor(kp.x[d] + half));
  }

  std::array<double, 64> hist{};
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const double gx = 0.5 * (smoothed.at(x + 1, y, z) - smoothed.at(x - 1, y, z));
        const double gy = 0.5 * (smoothed.at(x, y + 1, z) - smoothed.at(x, y - 1, z));
        const double gz = 0.5 * (smoothed.at(x, y, z + 1) - smoothed.at(x, y, z - 1));
        const double mag = std::sqrt(gx * gx + gy * gy + gz * gz);
        if (mag == 0.0) continue;

        const double dx = x - kp.x[0];
        const double dy = y - kp.x[1];
        const double dz = z - kp.x[2];
        const double w =
            std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * wsigma * wsigma));

        const int orient = (gx < 0.0 ? 1 : 0) | (gy < 0.0 ? 2 : 0) | (gz < 0.0 ? 4 : 0);
        const int octant = (dx < 0.0 ? 1 : 0) | (dy < 0.0 ? 2 : 0) | (dz < 0.0 ? 4 : 0);
        hist[octant * 8 + orient] += mag * w;
      }

  double total = 0.0;
  for (double h : hist) total += h;
  if (total == 0.0) return std::nullopt;  // degenerate: no gradients in support
  clip_renormalize_raw(hist, cfg.clip_threshold);
  Descriptor64 desc{};
  for (int i = 0; i < 64; ++i) desc[i] = static_cast<float>(hist[i]);
  return desc;
}

std::optional<Descriptor64> compute_descriptor(const ScalarVolume& vol,
                                               const Keypoint& kp,
                                               const DescriptorConfig& cfg) {
  return descriptor_from_smoothed(gaussian_smooth(vol, kp.sigma), kp, cfg);
}

std::optional<Descriptor64> DescriptorExtractor::describe(const Keypoint& kp) {
  auto it = smoothed_.find(kp.sigma);
  if (it == smoothed_.end())
    it = smoothed_.emplace(kp.sigma, gaussian_smooth(vol_, kp.sigma)).first;
  return descriptor_from_smoothed(it->second, kp, cfg_);
}

std::vector<DescribedKeypoint> extract_keypoints(const ScalarVolume& vol,
                                                 const ScaleSpaceConfig& sscfg,
                                                 const DescriptorConfig& dcfg,
                                                 int threads) {
  const std::vector<Keypoint> kps = detect_keypoints(vol, sscfg);

  // Smooth each distinct sigma once up front so keypoints can be described
  // in parallel against read-only volumes.
  std::map<double, ScalarVolume> smoothed;
  for (const Keypoint& kp : kps) smoothed.try_emplace(kp.sigma);
  {
    std::vector<std::pair<const double, ScalarVolume>*> slots;
    for (auto& kv : smoothed) slots.push_back(&kv);
    const int workers = std::max(1, std::min<int>(threads, slots.size()));
    std::vector<std::future<void>> jobs;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < slots.size(); i = next++)
          slots[i]->second = gaussian_smooth(vol, slots[i]->first);
      }));
    for (auto& j : jobs) j.get();
  }

  std::vector<std::optional<Descriptor64>> descs(kps.size());
  {
    const int workers = std::max(1, std::min<int>(threads, kps.size()));
    std::vector<std::future<void>> jobs;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < kps.size(); i = next++)
          descs[i] = descriptor_from_smoothed(smoothed.at(kps[i].sigma), kps[i], dcfg);
      }));
    for (auto& j : jobs) j.get();
  }

  std::vector<DescribedKeypoint> out;
  out.reserve(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i)
    if (descs[i]) out.push_back({kps[i], *descs[i], kNoLabel});
  return out;
}

std::vector<DescribedKeypoint> assign_labels(std::span<const DescribedKeypoint> kps,
                                             const LabelVolume& seg) {
  std::vector<DescribedKeypoint> out;
  out.reserve(kps.size());
  for (const DescribedKeypoint& dk : kps) {
    const int x = static_cast<int>(std::llround(dk.kp.x[0]));
    const int y = static_cast<int>(std::llround(dk.kp.x[1]));
    const int z = static_cast<int>(std::llround(dk.kp.x[2]));
    if (!seg.inside(x, y, z)) continue;
    const std::int32_t label = seg.at(x, y, z);
    if (label == 0) continue;  // un-segmented background keypoints are discarded
    DescribedKeypoint labeled = dk;
    labeled.label = label;
    out.push_back(labeled);
  }
  return out;
}

}  // namespace kts
