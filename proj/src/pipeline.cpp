#include "kts/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"

namespace kts {

namespace {

using nlohmann::json;

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw input_error("config: unknown key '" + context + it.key() + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void parse_scale_space(const json& j, ScaleSpaceConfig& c) {
  check_keys(j,
             {"sigma0", "kappa", "levels_per_octave", "num_octaves",
              "contrast_threshold", "contrast_relative"},
             "scale_space.");
  get_to(j, "sigma0", c.sigma0);
  get_to(j, "kappa", c.kappa);
  get_to(j, "levels_per_octave", c.levels_per_octave);
  get_to(j, "num_octaves", c.num_octaves);
  if (j.contains("contrast_threshold") && !j.at("contrast_threshold").is_null())
    c.contrast_threshold = j.at("contrast_threshold").get<double>();
  get_to(j, "contrast_relative", c.contrast_relative);
}

void parse_descriptor(const json& j, DescriptorConfig& c) {
  check_keys(j, {"support_factor", "weight_sigma_factor", "clip_threshold"},
             "descriptor.");
  get_to(j, "support_factor", c.support_factor);
  get_to(j, "weight_sigma_factor", c.weight_sigma_factor);
  get_to(j, "clip_threshold", c.clip_threshold);
}

void parse_matching(const json& j, MatchingConfig& c) {
  check_keys(j,
             {"eps_sigma", "ratio_threshold", "hough_bins", "spatial_keep_fraction",
              "kde_sigma"},
             "matching.");
  get_to(j, "eps_sigma", c.eps_sigma);
  get_to(j, "ratio_threshold", c.ratio_threshold);
  get_to(j, "hough_bins", c.hough_bins);
  get_to(j, "spatial_keep_fraction", c.spatial_keep_fraction);
  get_to(j, "kde_sigma", c.kde_sigma);
  if (!(c.eps_sigma > 1.0)) throw input_error("config: eps_sigma must exceed 1");
  if (!(c.ratio_threshold > 0.0 && c.ratio_threshold < 1.0))
    throw input_error("config: ratio_threshold must be in (0, 1)");
  if (!(c.spatial_keep_fraction > 0.0 && c.spatial_keep_fraction <= 1.0))
    throw input_error("config: spatial_keep_fraction must be in (0, 1]");
  if (c.hough_bins < 1) throw input_error("config: hough_bins must be >= 1");
}

int parse_label_key(const std::string& key, const std::string& context) {
  try {
    std::size_t pos = 0;
    const int label = std::stoi(key, &pos);
    if (pos == key.size() && label >= 1) return label;
  } catch (const std::exception&) {
  }
  throw input_error("config: bad label key '" + key + "' in " + context);
}

void parse_transfer(const json& j, TransferConfig& c) {
  check_keys(j, {"nu_default", "nu_overrides", "background_threshold", "cross_label"},
             "transfer.");
  get_to(j, "nu_default", c.nu_default);
  get_to(j, "background_threshold", c.background_threshold);
  if (j.contains("nu_overrides"))
    for (auto it = j.at("nu_overrides").begin(); it != j.at("nu_overrides").end(); ++it)
      c.nu_override[parse_label_key(it.key(), "nu_overrides")] =
          it.value().get<double>();
  if (j.contains("cross_label"))
    for (auto it = j.at("cross_label").begin(); it != j.at("cross_label").end(); ++it)
      c.cross_label[parse_label_key(it.key(), "cross_label")] =
          it.value().get<std::vector<int>>();
  if (!(c.nu_default > 0.0)) throw input_error("config: nu must be positive");
  for (const auto& [l, nu] : c.nu_override)
    if (!(nu > 0.0)) throw input_error("config: nu must be positive");
  if (c.background_threshold < 0.0 || c.background_threshold > 1.0)
    throw input_error("config: background_threshold must be in [0, 1]");
}

void parse_phantom(const json& j, PhantomConfig& c) {
  check_keys(j,
             {"dims", "num_organs", "seed", "subject_jitter", "global_shift_range",
              "noise_sigma", "texture_blob_count", "quiet_organ"},
             "phantom.");
  get_to(j, "dims", c.dims);
  get_to(j, "num_organs", c.num_organs);
  get_to(j, "seed", c.seed);
  get_to(j, "subject_jitter", c.subject_jitter);
  get_to(j, "global_shift_range", c.global_shift_range);
  get_to(j, "noise_sigma", c.noise_sigma);
  get_to(j, "texture_blob_count", c.texture_blob_count);
  get_to(j, "quiet_organ", c.quiet_organ);
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw input_error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw input_error("config: top level must be an object");
  check_keys(j, {"scale_space", "descriptor", "matching", "transfer", "phantom",
                 "threads"},
             "");
  PipelineConfig cfg;
  if (j.contains("scale_space")) parse_scale_space(j.at("scale_space"), cfg.scale_space);
  if (j.contains("descriptor")) parse_descriptor(j.at("descriptor"), cfg.descriptor);
  if (j.contains("matching")) parse_matching(j.at("matching"), cfg.matching);
  if (j.contains("transfer")) parse_transfer(j.at("transfer"), cfg.transfer);
  if (j.contains("phantom")) parse_phantom(j.at("phantom"), cfg.phantom);
  get_to(j, "threads", cfg.threads);
  if (cfg.threads < 1) throw input_error("config: threads must be >= 1");
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  std::ifstream in(path);
  if (!in) throw input_error(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string PipelineConfig::to_json_text() const {
  json j;
  j["scale_space"] = {{"sigma0", scale_space.sigma0},
                      {"kappa", scale_space.kappa},
                      {"levels_per_octave", scale_space.levels_per_octave},
                      {"num_octaves", scale_space.num_octaves},
                      {"contrast_relative", scale_space.contrast_relative}};
  if (scale_space.contrast_threshold)
    j["scale_space"]["contrast_threshold"] = *scale_space.contrast_threshold;
  j["descriptor"] = {{"support_factor", descriptor.support_factor},
                     {"weight_sigma_factor", descriptor.weight_sigma_factor},
                     {"clip_threshold", descriptor.clip_threshold}};
  j["matching"] = {{"eps_sigma", matching.eps_sigma},
                   {"ratio_threshold", matching.ratio_threshold},
                   {"hough_bins", matching.hough_bins},
                   {"spatial_keep_fraction", matching.spatial_keep_fraction},
                   {"kde_sigma", matching.kde_sigma}};
  json nu = json::object();
  for (const auto& [l, v] : transfer.nu_override) nu[std::to_string(l)] = v;
  json cross = json::object();
  for (const auto& [l, v] : transfer.cross_label) cross[std::to_string(l)] = v;
  j["transfer"] = {{"nu_default", transfer.nu_default},
                   {"nu_overrides", nu},
                   {"background_threshold", transfer.background_threshold},
                   {"cross_label", cross}};
  j["phantom"] = {{"dims", phantom.dims},
                  {"num_organs", phantom.num_organs},
                  {"seed", phantom.seed},
                  {"subject_jitter", phantom.subject_jitter},
                  {"global_shift_range", phantom.global_shift_range},
                  {"noise_sigma", phantom.noise_sigma},
                  {"texture_blob_count", phantom.texture_blob_count},
                  {"quiet_organ", phantom.quiet_organ}};
  j["threads"] = threads;
  return j.dump(2);
}

TrainingCase prepare_training_case(const ScalarVolume& image, const LabelVolume& labels,
                                   const PipelineConfig& cfg) {
  TrainingCase tc;
  tc.image = image;
  tc.labels = labels;
  const std::vector<DescribedKeypoint> kps =
      extract_keypoints(image, cfg.scale_space, cfg.descriptor, cfg.threads);
  tc.keypoints = assign_labels(kps, labels);
  return tc;
}

SegmentOutput segment_volume(const ScalarVolume& test,
                             std::span<const TrainingCase> training,
                             const PipelineConfig& cfg) {
  if (training.empty()) throw input_error("segment: empty training set");

  SegmentOutput out;
  out.num_labels = 0;
  for (const TrainingCase& tc : training)
    out.num_labels = std::max(out.num_labels, tc.labels.num_labels);

  double t0 = now_s();
  out.test_keypoints =
      extract_keypoints(test, cfg.scale_space, cfg.descriptor, cfg.threads);
  out.timings.extraction_s = now_s() - t0;

  t0 = now_s();
  out.matches_per_image.resize(training.size());
  {
    const int workers =
        std::max(1, std::min<int>(cfg.threads, static_cast<int>(training.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < training.size(); i = next++) {
          ImageMatchResult r =
              match_training_image(out.test_keypoints, training[i].keypoints,
                                   static_cast<int>(i), cfg.matching);
          out.matches_per_image[i] = std::move(r.matches);
        }
      }));
    for (auto& j : jobs) j.get();
  }
  out.timings.matching_s = now_s() - t0;

  t0 = now_s();
  std::vector<std::vector<DescribedKeypoint>> train_kps;
  train_kps.reserve(training.size());
  for (const TrainingCase& tc : training) train_kps.push_back(tc.keypoints);
  out.votes = vote_all(out.matches_per_image, train_kps,
                       static_cast<int>(out.test_keypoints.size()), out.num_labels);
  out.timings.voting_s = now_s() - t0;

  t0 = now_s();
  out.result = transfer_segmentation(test, out.votes, training, out.matches_per_image,
                                     cfg.transfer, out.num_labels);
  out.timings.transfer_s = now_s() - t0;
  return out;
}

}  // namespace kts
