#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ovgsr/checkpoint.hpp"
#include "ovgsr/config.hpp"
#include "ovgsr/encoders.hpp"
#include "ovgsr/eval.hpp"
#include "ovgsr/grad_check.hpp"
#include "ovgsr/model.hpp"
#include "ovgsr/rationales.hpp"

// Run orchestration: data loading, feature/rationale preparation, the
// AdamW training loop with per-epoch checkpoints, teacher-free
// evaluation, batch rationale generation, and the gradient suite backing
// the `gradcheck` command. Training is single-threaded over parameters;
// rationale generation fans out over a bounded worker pool.
namespace ovgsr {

// ---- data ----------------------------------------------------------------

struct RunData {
  Vocabulary vocab;
  std::vector<AnnotatedImage> images;
  SplitSpec split;  // loaded from data.split, or synthesized all-train

  const AnnotatedImage* by_id(const std::string& id) const;
  std::vector<const AnnotatedImage*> subset(
      const std::vector<std::string>& ids) const;
};

RunData load_run_data(const RunConfig& cfg);

// Pixel file convention: <data.images_dir>/<image id>.bin.
ImageRef image_ref(const RunConfig& cfg, const std::string& id);

// The backend id cached rationale rows are expected to carry.
std::string cache_backend_id(const RunConfig& cfg);
std::unique_ptr<RationaleBackend> make_backend(const RunConfig& cfg,
                                               const Vocabulary& vocab);

// ---- model + example preparation -----------------------------------------

Model<double> build_model(const RunConfig& cfg, const Vocabulary& vocab,
                          const TextEncoder& text);

struct ExamplePrep {
  std::vector<TrainExample<double>> examples;
  int skipped = 0;  // images missing required cached rationales
};

// Encodes both towers, resizes to the model grid, and embeds the cached
// rationales each enabled branch needs. Images lacking a required
// record are skipped and counted; more than 5% skipped raises
// MissingRationale.
ExamplePrep prepare_examples(const RunConfig& cfg,
                             const std::vector<const AnnotatedImage*>& images,
                             const VisionEncoder* teacher,
                             const VisionEncoder& student,
                             const TextEncoder& text,
                             const RationaleCache& cache);

// ---- training loop --------------------------------------------------------

struct StepLog {
  int step = 0;
  double sit = 0, dis = 0, neg = 0, box = 0, total = 0;
};

std::string render_log_csv(const std::vector<StepLog>& log);
std::vector<StepLog> parse_log_csv(const std::string& text);

struct TrainHooks {
  std::function<void(int epoch, Model<double>&)> on_epoch_end;
};

// Shuffled epochs of batch-mean AdamW steps; one tape per example, the
// averaged breakdown of every step appended to the returned log. A
// non-finite loss aborts with the offending step and image ids.
std::vector<StepLog> train_model(Model<double>& model,
                                 const std::vector<TrainExample<double>>& examples,
                                 const RunConfig& cfg,
                                 const TrainHooks& hooks = {});

// ---- run orchestration ------------------------------------------------------

struct RunPaths {
  std::string out_dir, log_csv, metrics_csv, report_txt, loss_svg, final_ckpt;
  std::string epoch_ckpt(int epoch) const;
};

RunPaths run_paths(const RunConfig& cfg);

struct TrainRunResult {
  std::vector<StepLog> log;
  int examples = 0;
  int skipped = 0;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> checkpoints;  // per-epoch paths, final last
};

// Full train pipeline: load, prepare, train, checkpoint every epoch,
// write the CSV log, and verify the frozen encoders' checksums did not
// move.
TrainRunResult run_training(const RunConfig& cfg);

struct EvalResult {
  MetricReport report;
  std::uint64_t fingerprint = 0;  // from the checkpoint
  int images = 0;
};

// Teacher-free evaluation of a checkpoint on one split subset
// ("train", "dev", or "test"). Builds only the student tower and the
// text encoder; never touches the teacher or the rationale cache.
EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& subset);

struct RationaleRunStats {
  int generated = 0;  // images processed this run
  int cached = 0;     // images already covered and skipped
  int flagged = 0;    // records kept despite missing the threshold
};

// Generates (or refreshes, with force) the four cached records for
// every training image, jrg.parallel workers wide.
RationaleRunStats run_rationales(const RunConfig& cfg, bool force);

// ---- gradient suite ---------------------------------------------------------

struct NamedGradReport {
  std::string term;
  GradCheckReport report;
};

// Finite-difference verification of every loss term and the weighted
// total on a two-image stub-encoder micro-batch, checking all model
// parameters. Covers both negative-loss sign conventions.
std::vector<NamedGradReport> gradient_suite(std::uint64_t seed = 0);

// ---- reporting ---------------------------------------------------------------

// Standalone SVG line chart of the per-term loss curves.
std::string render_loss_curve_svg(const std::vector<StepLog>& log);

}  // namespace ovgsr
