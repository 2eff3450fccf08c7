#include "kts/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace kts {

double descriptor_distance(const Descriptor64& a, const Descriptor64& b) {
  double s = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

bool scale_compatible(double test_sigma, double train_sigma, double eps_sigma) {
  const double r = test_sigma / train_sigma;
  return r >= 1.0 / eps_sigma && r <= eps_sigma;
}

double residual(const Match& m, const std::array<double, 3>& t) {
  const double dx = m.translation[0] - t[0];
  const double dy = m.translation[1] - t[1];
  const double dz = m.translation[2] - t[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Nearest-neighbor search over an index subset; ties go to the lowest
// training index by scanning in index order with strict improvement.
template <typename Pred>
std::optional<Match> match_one(const DescribedKeypoint& test, int test_index,
                               std::span<const DescribedKeypoint> train_kps,
                               int train_image, const MatchingConfig& cfg,
                               bool allow_single, Pred&& candidate_ok) {
  int best = -1, second = -1;
  double best_d = 0.0, second_d = 0.0;
  int candidates = 0;
  for (std::size_t j = 0; j < train_kps.size(); ++j) {
    if (!candidate_ok(train_kps[j])) continue;
    ++candidates;
    const double d = descriptor_distance(test.descriptor, train_kps[j].descriptor);
    if (best < 0 || d < best_d) {
      second = best;
      second_d = best_d;
      best = static_cast<int>(j);
      best_d = d;
    } else if (second < 0 || d < second_d) {
      second = static_cast<int>(j);
      second_d = d;
    }
  }
  if (best < 0) return std::nullopt;
  if (candidates < 2) {
    if (!allow_single) return std::nullopt;
  } else {
    if (second_d == 0.0) return std::nullopt;  // duplicate-descriptor ambiguity
    if (best_d / second_d > cfg.ratio_threshold) return std::nullopt;
  }
  Match m;
  m.test_index = test_index;
  m.train_index = best;
  m.train_image = train_image;
  m.desc_dist = best_d;
  for (int d = 0; d < 3; ++d)
    m.translation[d] = test.kp.x[d] - train_kps[best].kp.x[d];
  return m;
}

}  // namespace

std::vector<Match> stage1_match(std::span<const DescribedKeypoint> test_kps,
                                std::span<const DescribedKeypoint> train_kps,
                                int train_image, const MatchingConfig& cfg) {
  std::vector<Match> out;
  for (std::size_t i = 0; i < test_kps.size(); ++i) {
    const DescribedKeypoint& test = test_kps[i];
    auto m = match_one(test, static_cast<int>(i), train_kps, train_image, cfg,
                       /*allow_single=*/false, [&](const DescribedKeypoint& tr) {
                         return scale_compatible(test.kp.sigma, tr.kp.sigma,
                                                 cfg.eps_sigma);
                       });
    if (m) out.push_back(*m);
  }
  return out;
}

std::optional<std::array<double, 3>> hough_translation(std::span<const Match> matches,
                                                       const MatchingConfig& cfg) {
  if (matches.empty()) return std::nullopt;
  const int bins = cfg.hough_bins;

  std::array<double, 3> lo{}, hi{};
  for (int d = 0; d < 3; ++d) {
    lo[d] = hi[d] = matches[0].translation[d];
    for (const Match& m : matches) {
      lo[d] = std::min(lo[d], m.translation[d]);
      hi[d] = std::max(hi[d], m.translation[d]);
    }
  }

  auto bin_of = [&](const Match& m) {
    int idx[3];
    for (int d = 0; d < 3; ++d) {
      const double w = hi[d] - lo[d];
      int b = w > 0.0 ? static_cast<int>((m.translation[d] - lo[d]) / w * bins) : 0;
      idx[d] = std::clamp(b, 0, bins - 1);
    }
    return idx[0] + bins * (idx[1] + bins * idx[2]);
  };

  std::vector<int> counts(static_cast<std::size_t>(bins) * bins * bins, 0);
  for (const Match& m : matches) ++counts[bin_of(m)];
  const int best_bin = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());

  std::array<double, 3> t{0, 0, 0};
  int n = 0;
  for (const Match& m : matches)
    if (bin_of(m) == best_bin) {
      for (int d = 0; d < 3; ++d) t[d] += m.translation[d];
      ++n;
    }
  for (int d = 0; d < 3; ++d) t[d] /= n;
  return t;
}

double spatial_tolerance(std::span<const Match> stage1, const std::array<double, 3>& t,
                         const MatchingConfig& cfg) {
  std::vector<double> r;
  r.reserve(stage1.size());
  for (const Match& m : stage1) r.push_back(residual(m, t));
  std::sort(r.begin(), r.end());
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.spatial_keep_fraction * r.size())));
  return r[k - 1];
}

std::vector<Match> stage2_match(std::span<const DescribedKeypoint> test_kps,
                                std::span<const DescribedKeypoint> train_kps,
                                int train_image, const std::array<double, 3>& t,
                                double eps_x, const MatchingConfig& cfg) {
  std::vector<Match> out;
  for (std::size_t i = 0; i < test_kps.size(); ++i) {
    const DescribedKeypoint& test = test_kps[i];
    auto m = match_one(test, static_cast<int>(i), train_kps, train_image, cfg,
                       /*allow_single=*/true, [&](const DescribedKeypoint& tr) {
                         if (!scale_compatible(test.kp.sigma, tr.kp.sigma,
                                               cfg.eps_sigma))
                           return false;
                         double dx = test.kp.x[0] - tr.kp.x[0] - t[0];
                         double dy = test.kp.x[1] - tr.kp.x[1] - t[1];
                         double dz = test.kp.x[2] - tr.kp.x[2] - t[2];
                         return std::sqrt(dx * dx + dy * dy + dz * dz) <= eps_x;
                       });
    if (m) out.push_back(*m);
  }
  return out;
}

void estimate_match_distribution(std::vector<Match>& matches,
                                 const MatchingConfig& cfg) {
  if (matches.empty()) return;
  const std::size_t n = matches.size();

  std::array<double, 3> lo{}, hi{};
  for (int d = 0; d < 3; ++d) {
    lo[d] = hi[d] = matches[0].translation[d];
    for (const Match& m : matches) {
      lo[d] = std::min(lo[d], m.translation[d]);
      hi[d] = std::max(hi[d], m.translation[d]);
    }
  }

  std::vector<std::array<double, 3>> u(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) {
      const double w = hi[d] - lo[d];
      u[i][d] = w > 0.0 ? (matches[i].translation[d] - lo[d]) / w : 0.5;
    }

  const double inv2h2 = 1.0 / (2.0 * cfg.kde_sigma * cfg.kde_sigma);
  std::vector<double> density(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = u[i][0] - u[j][0];
      const double dy = u[i][1] - u[j][1];
      const double dz = u[i][2] - u[j][2];
      acc += std::exp(-(dx * dx + dy * dy + dz * dz) * inv2h2);
    }
    density[i] = acc / static_cast<double>(n);
    total += density[i];
  }
  for (std::size_t i = 0; i < n; ++i) matches[i].p_m = density[i] / total;
}

ImageMatchResult match_training_image(std::span<const DescribedKeypoint> test_kps,
                                      std::span<const DescribedKeypoint> train_kps,
                                      int train_image, const MatchingConfig& cfg) {
  ImageMatchResult res;
  res.train_image = train_image;
  const std::vector<Match> stage1 =
      stage1_match(test_kps, train_kps, train_image, cfg);
  const auto t = hough_translation(stage1, cfg);
  if (!t) return res;  // no alignment, image is skipped
  res.aligned = true;
  res.translation = *t;
  res.eps_x = spatial_tolerance(stage1, *t, cfg);
  res.matches = stage2_match(test_kps, train_kps, train_image, *t, res.eps_x, cfg);
  estimate_match_distribution(res.matches, cfg);
  return res;
}

void write_matches_csv(const std::string& path,
                       std::span<const std::vector<Match>> matches_per_image) {
  std::ofstream out(path);
  if (!out) throw input_error(path + ": cannot open for writing");
  out << "test_index,train_image,train_index,desc_dist,tx,ty,tz,p_m\n";
  char buf[256];
  for (const auto& matches : matches_per_image)
    for (const Match& m : matches) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    m.test_index, m.train_image, m.train_index, m.desc_dist,
                    m.translation[0], m.translation[1], m.translation[2], m.p_m);
      out << buf;
    }
  if (!out) throw input_error(path + ": write failed");
}

}  // namespace kts
