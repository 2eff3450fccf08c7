#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kts/descriptor.hpp"
#include "kts/phantom.hpp"
#include "kts/voting.hpp"

namespace kts {

// Dice overlap 2|A n B| / (|A| + |B|) of one label's masks. Both masks
// empty counts as perfect agreement (1); exactly one empty is 0.
double dice(const LabelVolume& ref, const LabelVolume& seg, int label);

struct VotingStats {
  int label = 0;  // 0 is the background row
  long keypoint_count = 0;
  double fraction_labeled = 0.0;
  std::optional<double> fraction_correct;  // nullopt when nothing was labeled
};

// Per true label (from `truth` at the keypoint locations): keypoint count,
// fraction that received a vote, and fraction of votes that are correct.
std::vector<VotingStats> voting_statistics(std::span<const DescribedKeypoint> test_kps,
                                           std::span<const LabelPosterior> votes,
                                           const LabelVolume& truth);

struct StageTimings {
  double extraction_s = 0.0;
  double matching_s = 0.0;
  double voting_s = 0.0;
  double transfer_s = 0.0;
};

struct EvalReport {
  int fold = 0;
  std::map<int, double> per_label_dice;
  std::vector<VotingStats> voting;
  StageTimings timings;
  std::string error;  // non-empty when the fold failed
};

struct LabelSummary {
  int label = 0;
  int folds = 0;
  double mean_dice = 0.0;
  double stderr_dice = 0.0;
};

// Mean and standard error of Dice per label over the successful folds.
std::vector<LabelSummary> aggregate(std::span<const EvalReport> reports);

struct PipelineConfig;

// Full pipeline per fold, each subject tested against all the others.
// Failures are recorded in the fold's report instead of aborting the run.
std::vector<EvalReport> leave_one_out(std::span<const Subject> subjects,
                                      const PipelineConfig& cfg);

// Fig.-12-style protocol: for each size n, train on subjects [0, n) and
// evaluate every remaining subject; one report list per size.
std::vector<std::vector<EvalReport>> training_size_sweep(
    std::span<const Subject> subjects, std::span<const int> sizes,
    const PipelineConfig& cfg);

void write_report_json(const std::string& path, std::span<const EvalReport> reports);
void write_report_csv(const std::string& path, std::span<const EvalReport> reports);

}  // namespace kts
