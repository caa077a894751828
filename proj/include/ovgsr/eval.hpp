#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovgsr/core.hpp"

// Open-vocabulary split generation and the five-metric evaluator with
// its three verb subsets (all / rare / unseen).
namespace ovgsr {

struct SplitSpec {
  std::uint64_t seed = 0;
  std::vector<int> unseen_verbs;  // one sampled per frequency stratum
  std::vector<int> rare_verbs;    // lowest-frequency seen verbs
  std::vector<std::string> train, dev, test;
  std::vector<std::string> dev_unseen, test_unseen;  // subsets of dev/test
};

struct SplitOptions {
  int k_unseen = 10;
  int k_rare = 20;
  int unseen_cap = 500;      // per side; surplus images are dropped
  double train_frac = 0.6;
  double dev_frac = 0.2;     // remainder after train+dev goes to test
};

// Frequency-stratified unseen verb sampling, then rare selection and
// seeded image shuffling into train/dev/test. Deterministic per seed.
SplitSpec make_split(const std::vector<AnnotatedImage>& images,
                     const Vocabulary& vocab, std::uint64_t seed,
                     const SplitOptions& opt = {});

void save_split(const SplitSpec& split, const std::string& path);
SplitSpec load_split(const std::string& path);

// Intersection over union of pixel boxes; throws DegenerateBox on
// empty or inverted extents.
double iou(const Box& a, const Box& b);

struct MetricCell {
  std::int64_t correct = 0;
  std::int64_t total = 0;

  double pct() const { return total == 0 ? 0.0 : 100.0 * correct / total; }
};

// One verb subset's row. val_all/grnd_all are reported only for the
// full set (role vocabularies are never open, so the rare/unseen rows
// track verb, value, grnd).
struct SettingReport {
  MetricCell verb;      // per image
  MetricCell value;     // per (image, role)
  MetricCell grnd;      // per (image, role)
  std::optional<MetricCell> val_all;   // per image
  std::optional<MetricCell> grnd_all;  // per image
};

struct MetricReport {
  SettingReport all, rare, unseen;
};

// Scores predictions against gold annotations. Every gold image needs a
// prediction (MissingPrediction otherwise). A role's noun is correct if
// it matches any of the three annotators; grounding additionally needs
// IoU >= 0.5 or matching ABSENT. All role metrics require the verb to
// be correct first.
MetricReport evaluate(const std::map<std::string, SituationPrediction>& preds,
                      const std::vector<AnnotatedImage>& gold,
                      const SplitSpec& split);

// Fixed-precision renderings; identical reports produce identical text.
std::string render_metrics_csv(const MetricReport& report);
std::string render_metrics_table(const MetricReport& report);

}  // namespace ovgsr
