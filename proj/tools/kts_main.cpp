// kts: keypoint-transfer segmentation pipeline.
//
// Subcommands stage the pipeline through files: `phantom` writes synthetic
// subjects, `extract` turns a volume into a keypoint file, `segment` runs
// match -> vote -> transfer against a training manifest, `eval` scores a
// segmentation, `loo` runs leave-one-out on a phantom corpus.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "kts/eval.hpp"
#include "kts/keypoint_io.hpp"
#include "kts/phantom.hpp"
#include "kts/pipeline.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

kts::PipelineConfig load_config(const CommonOpts& opts) {
  kts::PipelineConfig cfg = kts::PipelineConfig::load(opts.config_path);
  if (opts.threads) cfg.threads = *opts.threads;
  if (opts.seed) cfg.phantom.seed = *opts.seed;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw kts::input_error(path + ": cannot open for writing");
  out << text;
}

json provenance_json(const kts::SubjectProvenance& p) {
  json organs = json::array();
  for (const auto& o : p.organs)
    organs.push_back({{"label", o.label},
                      {"center", o.center},
                      {"semi_axes", o.semi_axes},
                      {"intensity", o.intensity}});
  return {{"seed", p.seed},
          {"subject_id", p.subject_id},
          {"global_shift", p.global_shift},
          {"organs", organs}};
}

int cmd_phantom(const CommonOpts& common, const std::string& out_dir, int count) {
  const kts::PipelineConfig cfg = load_config(common);
  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    const kts::Subject s = kts::generate_subject(cfg.phantom, i);
    const std::string stem = out_dir + "/subject" + std::to_string(i);
    kts::write_volume(s.image, stem + "_image.nrrd");
    kts::write_volume(s.labels, stem + "_labels.nrrd");
    write_text(stem + "_provenance.json", provenance_json(s.provenance).dump(2) + "\n");
  }
  return 0;
}

int cmd_extract(const CommonOpts& common, const std::string& image_path,
                const std::string& labels_path, const std::string& out_path) {
  const kts::PipelineConfig cfg = load_config(common);
  const kts::ScalarVolume vol = kts::read_scalar_volume(image_path);
  std::vector<kts::DescribedKeypoint> kps =
      kts::extract_keypoints(vol, cfg.scale_space, cfg.descriptor, cfg.threads);
  const std::size_t detected =
      kts::detect_keypoints(vol, cfg.scale_space).size();
  if (detected > 0 && kps.empty())
    throw std::runtime_error(image_path +
                             ": every detected keypoint was degenerate or "
                             "unsupported; no descriptors to write");
  if (!labels_path.empty()) {
    const kts::LabelVolume labels = kts::read_label_volume(labels_path);
    if (labels.dims != vol.dims)
      throw kts::input_error(labels_path + ": geometry does not match image");
    kps = kts::assign_labels(kps, labels);
  }
  kts::write_keypoints_csv(out_path, kps);
  return 0;
}

struct ManifestEntry {
  std::string image, labels, keypoints;
};

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw kts::input_error(path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw kts::input_error(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("training") || !j.at("training").is_array())
    throw kts::input_error(path + ": expected {\"training\": [...]}");
  std::vector<ManifestEntry> entries;
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const json& e : j.at("training")) {
    ManifestEntry m;
    m.image = e.at("image").get<std::string>();
    m.labels = e.at("labels").get<std::string>();
    if (e.contains("keypoints")) m.keypoints = e.at("keypoints").get<std::string>();
    // Relative paths resolve against the manifest location.
    for (std::string* p : {&m.image, &m.labels, &m.keypoints})
      if (!p->empty() && std::filesystem::path(*p).is_relative())
        *p = (base / *p).string();
    entries.push_back(m);
  }
  if (entries.empty()) throw kts::input_error(path + ": empty training set");
  return entries;
}

int cmd_segment(const CommonOpts& common, const std::string& test_path,
                const std::string& manifest_path, const std::string& out_path,
                const std::string& report_path, const std::string& maps_dir,
                const std::string& matches_path, const std::string& voted_path) {
  const kts::PipelineConfig cfg = load_config(common);
  const kts::ScalarVolume test = kts::read_scalar_volume(test_path);

  std::vector<kts::TrainingCase> training;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    kts::TrainingCase tc;
    tc.image = kts::read_scalar_volume(e.image);
    tc.labels = kts::read_label_volume(e.labels);
    if (!e.keypoints.empty()) {
      tc.keypoints = kts::read_keypoints_csv(e.keypoints);
      for (const auto& dk : tc.keypoints)
        if (dk.label <= 0)
          throw kts::input_error(e.keypoints + ": training keypoints must be labeled");
    } else {
      tc = kts::prepare_training_case(tc.image, tc.labels, cfg);
    }
    training.push_back(std::move(tc));
  }

  const kts::SegmentOutput out = kts::segment_volume(test, training, cfg);
  kts::write_volume(out.result.labels, out_path);

  if (!maps_dir.empty()) {
    std::filesystem::create_directories(maps_dir);
    for (int l = 1; l <= out.num_labels; ++l)
      kts::write_volume(out.result.probability_maps.maps[l - 1],
                        maps_dir + "/prob_label" + std::to_string(l) + ".nrrd");
  }
  if (!matches_path.empty())
    kts::write_matches_csv(matches_path, out.matches_per_image);
  if (!voted_path.empty())
    kts::write_voted_keypoints_csv(voted_path, out.test_keypoints, out.votes,
                                   out.num_labels);

  json report;
  report["test_image"] = test_path;
  report["training_count"] = training.size();
  report["num_labels"] = out.num_labels;
  report["test_keypoints"] = out.test_keypoints.size();
  long total_matches = 0;
  for (const auto& m : out.matches_per_image) total_matches += m.size();
  report["matches"] = total_matches;
  report["transfer_events"] = out.result.transfer_events;
  json z = json::object();
  for (int l = 1; l <= out.num_labels; ++l)
    z[std::to_string(l)] = out.result.probability_maps.z_norm[l - 1];
  report["z_norm"] = z;
  report["timings"] = {{"extraction_s", out.timings.extraction_s},
                       {"matching_s", out.timings.matching_s},
                       {"voting_s", out.timings.voting_s},
                       {"transfer_s", out.timings.transfer_s}};
  const std::string report_text = report.dump(2) + "\n";
  if (!report_path.empty()) write_text(report_path, report_text);
  std::cout << report_text;
  return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& seg_path,
             const std::string& out_path) {
  const kts::LabelVolume ref = kts::read_label_volume(ref_path);
  const kts::LabelVolume seg = kts::read_label_volume(seg_path);
  const int num_labels = std::max(ref.num_labels, seg.num_labels);
  json d = json::object();
  for (int l = 1; l <= num_labels; ++l)
    d[std::to_string(l)] = kts::dice(ref, seg, l);
  json report = {{"reference", ref_path}, {"segmentation", seg_path}, {"dice", d}};
  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_loo(const CommonOpts& common, int subjects, const std::string& out_dir) {
  const kts::PipelineConfig cfg = load_config(common);
  if (subjects < 2) throw kts::input_error("loo: need at least 2 subjects");
  std::vector<kts::Subject> corpus;
  for (int i = 0; i < subjects; ++i)
    corpus.push_back(kts::generate_subject(cfg.phantom, i));
  const std::vector<kts::EvalReport> reports = kts::leave_one_out(corpus, cfg);
  std::filesystem::create_directories(out_dir);
  kts::write_report_json(out_dir + "/loo_report.json", reports);
  kts::write_report_csv(out_dir + "/loo_report.csv", reports);
  for (const kts::LabelSummary& s : kts::aggregate(reports))
    std::cout << "label " << s.label << ": mean dice " << s.mean_dice << " (stderr "
              << s.stderr_dice << ", folds " << s.folds << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keypoint-transfer segmentation"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "pipeline config JSON");
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (1 = sequential)");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "phantom seed override");

  std::string out_dir = "phantom_out";
  int count = 1;
  auto* phantom = app.add_subcommand("phantom", "generate synthetic subjects");
  phantom->add_option("--out", out_dir, "output directory");
  phantom->add_option("--count", count, "number of subjects");

  std::string image_path, labels_path, kp_out;
  auto* extract = app.add_subcommand("extract", "detect and describe keypoints");
  extract->add_option("--image", image_path, "input volume (NRRD)")->required();
  extract->add_option("--labels", labels_path,
                      "segmentation used to label keypoints (training scans)");
  extract->add_option("--out", kp_out, "keypoint CSV path")->required();

  std::string test_path, manifest_path, seg_out, report_out, maps_dir, matches_out,
      voted_out;
  auto* segment = app.add_subcommand("segment", "segment a test volume");
  segment->add_option("--test", test_path, "test volume (NRRD)")->required();
  segment->add_option("--manifest", manifest_path, "training manifest JSON")
      ->required();
  segment->add_option("--out", seg_out, "output label volume (NRRD)")->required();
  segment->add_option("--report", report_out, "summary JSON path");
  segment->add_option("--maps-dir", maps_dir, "directory for probability maps");
  segment->add_option("--matches", matches_out, "match CSV path");
  segment->add_option("--voted-keypoints", voted_out, "voted keypoint CSV path");

  std::string ref_path, eval_seg_path, eval_out;
  auto* eval = app.add_subcommand("eval", "Dice between two label volumes");
  eval->add_option("--ref", ref_path, "reference labels (NRRD)")->required();
  eval->add_option("--seg", eval_seg_path, "segmentation labels (NRRD)")->required();
  eval->add_option("--out", eval_out, "report JSON path");

  int loo_subjects = 10;
  std::string loo_out = "loo_out";
  auto* loo = app.add_subcommand("loo", "leave-one-out on a phantom corpus");
  loo->add_option("--subjects", loo_subjects, "corpus size");
  loo->add_option("--out", loo_out, "output directory");

  try {
    app.parse(argc, argv);
    if (threads > 0) common.threads = threads;
    if (*seed_opt) common.seed = seed;

    if (phantom->parsed()) return cmd_phantom(common, out_dir, count);
    if (extract->parsed())
      return cmd_extract(common, image_path, labels_path, kp_out);
    if (segment->parsed())
      return cmd_segment(common, test_path, manifest_path, seg_out, report_out,
                         maps_dir, matches_out, voted_out);
    if (eval->parsed()) return cmd_eval(ref_path, eval_seg_path, eval_out);
    if (loo->parsed()) return cmd_loo(common, loo_subjects, loo_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const kts::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
