#include "kts/eval.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "kts/pipeline.hpp"

namespace kts {

double dice(const LabelVolume& ref, const LabelVolume& seg, int label) {
  if (ref.dims != seg.dims)
    throw input_error("dice: volumes have different dimensions");
  long a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const bool in_a = ref.data[i] == label;
    const bool in_b = seg.data[i] == label;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<VotingStats> voting_statistics(std::span<const DescribedKeypoint> test_kps,
                                           std::span<const LabelPosterior> votes,
                                           const LabelVolume& truth) {
  std::vector<VotingStats> stats(truth.num_labels + 1);
  for (int l = 0; l <= truth.num_labels; ++l) stats[l].label = l;
  std::vector<long> labeled(truth.num_labels + 1, 0);
  std::vector<long> correct(truth.num_labels + 1, 0);

  for (std::size_t i = 0; i < test_kps.size(); ++i) {
    const auto& kp = test_kps[i].kp;
    const int x = static_cast<int>(std::llround(kp.x[0]));
    const int y = static_cast<int>(std::llround(kp.x[1]));
    const int z = static_cast<int>(std::llround(kp.x[2]));
    if (!truth.inside(x, y, z)) continue;
    const int true_label = truth.at(x, y, z);
    ++stats[true_label].keypoint_count;
    if (i < votes.size() && votes[i].voted_label) {
      ++labeled[true_label];
      if (*votes[i].voted_label == true_label) ++correct[true_label];
    }
  }
  for (int l = 0; l <= truth.num_labels; ++l) {
    if (stats[l].keypoint_count > 0)
      stats[l].fraction_labeled =
          static_cast<double>(labeled[l]) / stats[l].keypoint_count;
    if (labeled[l] > 0)
      stats[l].fraction_correct = static_cast<double>(correct[l]) / labeled[l];
  }
  return stats;
}

std::vector<LabelSummary> aggregate(std::span<const EvalReport> reports) {
  std::map<int, std::vector<double>> per_label;
  for (const EvalReport& r : reports) {
    if (!r.error.empty()) continue;
    for (const auto& [label, d] : r.per_label_dice) per_label[label].push_back(d);
  }
  std::vector<LabelSummary> out;
  for (const auto& [label, values] : per_label) {
    LabelSummary s;
    s.label = label;
    s.folds = static_cast<int>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= values.size();
    s.mean_dice = mean;
    if (values.size() > 1) {
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= (values.size() - 1);
      s.stderr_dice = std::sqrt(var / values.size());
    }
    out.push_back(s);
  }
  return out;
}

namespace {

EvalReport evaluate_fold(int fold, const Subject& test,
                         std::span<const TrainingCase> training,
                         const PipelineConfig& cfg) {
  EvalReport report;
  report.fold = fold;
  try {
    const SegmentOutput seg = segment_volume(test.image, training, cfg);
    report.timings = seg.timings;
    for (int l = 1; l <= seg.num_labels; ++l)
      report.per_label_dice[l] = dice(test.labels, seg.result.labels, l);
    report.voting = voting_statistics(seg.test_keypoints, seg.votes, test.labels);
  } catch (const std::exception& e) {
    report.error = e.what();
  }
  return report;
}

}  // namespace

std::vector<EvalReport> leave_one_out(std::span<const Subject> subjects,
                                      const PipelineConfig& cfg) {
  if (subjects.size() < 2)
    throw input_error("leave_one_out: need at least 2 subjects");

  // Keypoints are extracted once per subject and reused across folds.
  std::vector<TrainingCase> cases;
  cases.reserve(subjects.size());
  for (const Subject& s : subjects)
    cases.push_back(prepare_training_case(s.image, s.labels, cfg));

  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    std::vector<TrainingCase> training;
    training.reserve(cases.size() - 1);
    for (std::size_t j = 0; j < cases.size(); ++j)
      if (j != i) training.push_back(cases[j]);
    reports.push_back(
        evaluate_fold(static_cast<int>(i), subjects[i], training, cfg));
  }
  return reports;
}

std::vector<std::vector<EvalReport>> training_size_sweep(
    std::span<const Subject> subjects, std::span<const int> sizes,
    const PipelineConfig& cfg) {
  std::vector<TrainingCase> cases;
  cases.reserve(subjects.size());
  for (const Subject& s : subjects)
    cases.push_back(prepare_training_case(s.image, s.labels, cfg));

  std::vector<std::vector<EvalReport>> out;
  for (const int n : sizes) {
    if (n < 1 || n >= static_cast<int>(subjects.size()))
      throw input_error("training_size_sweep: size out of range");
    const std::vector<TrainingCase> training(cases.begin(), cases.begin() + n);
    std::vector<EvalReport> reports;
    for (std::size_t i = n; i < subjects.size(); ++i)
      reports.push_back(
          evaluate_fold(static_cast<int>(i), subjects[i], training, cfg));
    out.push_back(std::move(reports));
  }
  return out;
}

namespace {

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["fold"] = r.fold;
  if (!r.error.empty()) {
    j["error"] = r.error;
    return j;
  }
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [label, v] : r.per_label_dice) d[std::to_string(label)] = v;
  j["dice"] = d;
  nlohmann::json voting = nlohmann::json::array();
  for (const VotingStats& s : r.voting) {
    nlohmann::json v = {{"label", s.label},
                        {"keypoints", s.keypoint_count},
                        {"fraction_labeled", s.fraction_labeled}};
    if (s.fraction_correct)
      v["fraction_correct"] = *s.fraction_correct;
    else
      v["fraction_correct"] = nullptr;
    voting.push_back(v);
  }
  j["voting"] = voting;
  j["timings"] = {{"extraction_s", r.timings.extraction_s},
                  {"matching_s", r.timings.matching_s},
                  {"voting_s", r.timings.voting_s},
                  {"transfer_s", r.timings.transfer_s}};
  return j;
}

}  // namespace

void write_report_json(const std::string& path, std::span<const EvalReport> reports) {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const EvalReport& r : reports) j["folds"].push_back(report_to_json(r));
  nlohmann::json agg = nlohmann::json::array();
  for (const LabelSummary& s : aggregate(reports))
    agg.push_back({{"label", s.label},
                   {"folds", s.folds},
                   {"mean_dice", s.mean_dice},
                   {"stderr_dice", s.stderr_dice}});
  j["summary"] = agg;
  std::ofstream out(path);
  if (!out) throw input_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path, std::span<const EvalReport> reports) {
  std::ofstream out(path);
  if (!out) throw input_error(path + ": cannot open for writing");
  out << "fold,label,dice\n";
  for (const EvalReport& r : reports) {
    if (!r.error.empty()) continue;
    for (const auto& [label, d] : r.per_label_dice)
      out << r.fold << "," << label << "," << d << "\n";
  }
}

}  // namespace kts
