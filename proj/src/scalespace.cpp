#include "kts/scalespace.hpp"

#include <algorithm>
#include <cmath>

namespace kts {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[i + radius] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Convolve along one axis with replicated borders. axis: 0=x, 1=y, 2=z.
void convolve_axis(const ScalarVolume& src, ScalarVolume& dst,
                   const std::vector<double>& kernel, int axis) {
  const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
  const auto& d = src.dims;
  const std::size_t stride = axis == 0 ? 1
                           : axis == 1 ? static_cast<std::size_t>(d[0])
                                       : static_cast<std::size_t>(d[0]) * d[1];
  const int n = d[axis];

  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const int pos = axis == 0 ? x : axis == 1 ? y : z;
        const std::size_t base = src.index(x, y, z) - pos * stride;
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int p = std::clamp(pos + i, 0, n - 1);
          acc += kernel[i + radius] * src.data[base + p * stride];
        }
        dst.data[src.index(x, y, z)] = acc;
      }
}

ScalarVolume downsample_by_two(const ScalarVolume& src) {
  ScalarVolume out;
  for (int dIdx = 0; dIdx < 3; ++dIdx) out.dims[dIdx] = (src.dims[dIdx] + 1) / 2;
  out.spacing = {src.spacing[0] * 2, src.spacing[1] * 2, src.spacing[2] * 2};
  out.origin = src.origin;
  out.data.resize(out.voxel_count());
  for (int z = 0; z < out.dims[2]; ++z)
    for (int y = 0; y < out.dims[1]; ++y)
      for (int x = 0; x < out.dims[0]; ++x)
        out.at(x, y, z) = src.at(2 * x, 2 * y, 2 * z);
  return out;
}

void validate_config(const ScaleSpaceConfig& cfg) {
  if (!(cfg.sigma0 > 0.0)) throw input_error("scale space: sigma0 must be positive");
  if (!(cfg.kappa > 1.0)) throw input_error("scale space: kappa must exceed 1");
  if (cfg.levels_per_octave < 1 || cfg.num_octaves < 1)
    throw input_error("scale space: levels_per_octave and num_octaves must be >= 1");
  if (cfg.contrast_threshold && !(*cfg.contrast_threshold >= 0.0))
    throw input_error("scale space: contrast_threshold must be non-negative");
}

}  // namespace

ScalarVolume gaussian_smooth(const ScalarVolume& vol, double sigma) {
  if (sigma <= 0.0) return vol;
  const std::vector<double> kernel = gaussian_kernel(sigma);
  ScalarVolume a = vol;
  ScalarVolume b = vol;
  convolve_axis(vol, a, kernel, 0);
  convolve_axis(a, b, kernel, 1);
  convolve_axis(b, a, kernel, 2);
  return a;
}

std::vector<OctaveStack> build_scale_space(const ScalarVolume& vol,
                                           const ScaleSpaceConfig& cfg) {
  validate_config(cfg);
  for (int d = 0; d < 3; ++d)
    if (vol.dims[d] < 8) throw input_error("scale space: volume dims must be >= 8");
  {
    const int shrink = 1 << (cfg.num_octaves - 1);
    for (int d = 0; d < 3; ++d)
      if (vol.dims[d] / shrink < 8)
        throw input_error("scale space: volume too small for requested octaves");
  }

  const int s = cfg.levels_per_octave;
  const int levels = s + 3;  // s usable DoG extremum levels per octave
  std::vector<OctaveStack> stack;
  stack.reserve(cfg.num_octaves);

  ScalarVolume base = vol;
  double base_blur = 0.0;  // blur of `base` in current octave grid units

  for (int o = 0; o < cfg.num_octaves; ++o) {
    OctaveStack oct;
    oct.octave = o;
    oct.scale = 1 << o;
    oct.gauss.reserve(levels);

    double current = base_blur;
    ScalarVolume img = std::move(base);
    for (int k = 0; k < levels; ++k) {
      const double target = cfg.sigma0 * std::pow(cfg.kappa, k);  // octave-grid units
      if (target > current) {
        const double inc = std::sqrt(target * target - current * current);
        img = gaussian_smooth(img, inc);
        current = target;
      }
      oct.gauss.push_back({target * oct.scale, img});
    }

    oct.dog.reserve(levels - 1);
    for (int k = 0; k + 1 < levels; ++k) {
      ScalarVolume d = oct.gauss[k + 1].vol;
      const ScalarVolume& lo = oct.gauss[k].vol;
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] -= lo.data[i];
      oct.dog.push_back(std::move(d));
    }

    if (o + 1 < cfg.num_octaves) {
      // Level s carries blur sigma0 * kappa^s, i.e. sigma0 * 2 when
      // kappa^s == 2; halving the grid brings it back to sigma0 units.
      base = downsample_by_two(oct.gauss[s].vol);
      base_blur = cfg.sigma0 * std::pow(cfg.kappa, s) / 2.0;
    }
    stack.push_back(std::move(oct));
  }
  return stack;
}

double effective_contrast_threshold(const ScalarVolume& vol,
                                    const ScaleSpaceConfig& cfg) {
  if (cfg.contrast_threshold) return *cfg.contrast_threshold;
  const auto [lo, hi] = std::minmax_element(vol.data.begin(), vol.data.end());
  return cfg.contrast_relative * (*hi - *lo);
}

std::vector<Keypoint> detect_keypoints(const std::vector<OctaveStack>& stack,
                                       double threshold) {
  std::vector<Keypoint> out;

  for (const OctaveStack& oct : stack) {
    const auto& d = oct.dog.front().dims;
    const int s = static_cast<int>(oct.dog.size()) - 2;
    for (int level = 1; level <= s; ++level) {
      const ScalarVolume& cur = oct.dog[level];
      const ScalarVolume* planes[3] = {&oct.dog[level - 1], &cur, &oct.dog[level + 1]};
      for (int z = 1; z < d[2] - 1; ++z)
        for (int y = 1; y < d[1] - 1; ++y)
          for (int x = 1; x < d[0] - 1; ++x) {
            const double v = cur.at(x, y, z);
            if (!(std::abs(v) > threshold)) continue;
            bool is_max = true, is_min = true;
            for (int p = 0; p < 3 && (is_max || is_min); ++p)
              for (int dz = -1; dz <= 1 && (is_max || is_min); ++dz)
                for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy)
                  for (int dx = -1; dx <= 1; ++dx) {
                    if (p == 1 && dx == 0 && dy == 0 && dz == 0) continue;
                    const double n = planes[p]->at(x + dx, y + dy, z + dz);
                    if (n >= v) is_max = false;
                    if (n <= v) is_min = false;
                    if (!is_max && !is_min) break;
                  }
            if (is_max || is_min) {
              Keypoint kp;
              kp.grid = {x, y, z};
              kp.octave = oct.octave;
              kp.level = level;
              kp.x = {static_cast<double>(x) * oct.scale,
                      static_cast<double>(y) * oct.scale,
                      static_cast<double>(z) * oct.scale};
              kp.sigma = oct.gauss[level].sigma;
              kp.dog_value = v;
              out.push_back(kp);
            }
          }
    }
  }
  return out;
}

std::vector<Keypoint> detect_keypoints(const ScalarVolume& vol,
                                       const ScaleSpaceConfig& cfg) {
  const std::vector<OctaveStack> stack = build_scale_space(vol, cfg);
  return detect_keypoints(stack, effective_contrast_threshold(vol, cfg));
}

}  // namespace kts
