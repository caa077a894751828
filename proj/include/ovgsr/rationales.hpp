#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ovgsr/core.hpp"

// Rationale generation with a judge-in-the-loop: every training image
// gets four text records (glimpse/gaze x positive/negative). Positives
// are drafted, scored 1-10 by a judge, and refined until they reach the
// acceptance threshold or the round cap; negatives are synthesized from
// the accepted positives by swapping the activity and entities.
namespace ovgsr {

enum class RationaleKind { Glimpse, Gaze };
enum class Polarity { Positive, Negative };

std::string to_string(RationaleKind k);
std::string to_string(Polarity p);
RationaleKind kind_from_string(const std::string& s);
Polarity polarity_from_string(const std::string& s);

struct RationaleRecord {
  std::string image_id;
  RationaleKind kind = RationaleKind::Glimpse;
  Polarity polarity = Polarity::Positive;
  std::string text;
  std::optional<int> score;  // 1-10; negatives are never scored
  int rounds = 0;            // refinements performed
  std::string backend_id;
  bool flagged = false;  // round cap hit before reaching the threshold
  std::int64_t timestamp = 0;
};

// Text-generation + grading backend. judge() must return a value in
// [1, 10]; implementations surface transport failures as BackendError
// and unusable judge replies as InvalidScore.
class RationaleBackend {
 public:
  virtual ~RationaleBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string pseudo_rationale(const std::string& image_id,
                                       RationaleKind kind,
                                       const std::string& situation) = 0;
  virtual int judge(const std::string& rationale, const std::string& situation) = 0;
  virtual std::string refine(const std::string& rationale,
                             const std::string& situation, int score) = 0;
  virtual std::string negative(const std::string& positive_text,
                               const std::string& situation) = 0;
};

struct JrgOptions {
  int threshold_n = 8;  // accept when score >= this
  int max_rounds = 5;   // refinement cap per positive rationale
};

// Draft -> judge -> refine loop for one positive rationale. On
// acceptance: flagged=false, score=accepting score, rounds=refinements
// used. On exhaustion: flagged=true, the best-scoring candidate (ties
// to the earliest, the initial draft included) is kept, rounds equals
// max_rounds.
RationaleRecord judge_loop(const std::string& image_id, RationaleKind kind,
                           const std::string& situation, RationaleBackend& backend,
                           const JrgOptions& opt);

// Full per-image generation: two judged positives, then one negative
// per kind derived from the accepted positive text. Order: glimpse+,
// gaze+, glimpse-, gaze-.
std::array<RationaleRecord, 4> generate_rationales(const std::string& image_id,
                                                   const std::string& situation,
                                                   RationaleBackend& backend,
                                                   const JrgOptions& opt);

// Human-readable situation summary used inside prompts:
// "verb role=noun role=noun ...".
std::string situation_text(const SituationFrame& frame, const Vocabulary& vocab);

// ---- cache ------------------------------------------------------------

// Append-only JSONL store keyed by (image_id, kind, polarity,
// backend_id); the latest line for a key wins. Lines that fail the
// schema are skipped and counted. Appends are serialized internally so
// parallel generation workers can share one cache.
class RationaleCache {
 public:
  explicit RationaleCache(std::string path);

  std::optional<RationaleRecord> get(const std::string& image_id,
                                     RationaleKind kind, Polarity polarity,
                                     const std::string& backend_id) const;
  void put(const RationaleRecord& record);

  std::size_t size() const;
  std::size_t corrupt_lines() const { return corrupt_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, RationaleRecord> index_;
  std::size_t corrupt_ = 0;
};

// ---- mock backend -------------------------------------------------------

// Nearest-neighbor confusion table over the deterministic text encoder:
// every verb and noun maps to its closest other entry of the same kind.
std::map<std::string, std::string> confusion_table(const Vocabulary& vocab,
                                                   std::uint64_t seed);

// Token-wise substitution of the situation's verb and nouns using the
// table. A missing verb entry falls back to swapping in the
// vocabulary's cyclic-next verb (replacing the first token when the
// verb does not occur in the text) and emits a warning.
std::string mock_negative(const std::string& positive_text,
                          const std::string& verb,
                          const std::vector<std::string>& nouns,
                          const std::map<std::string, std::string>& table,
                          const Vocabulary& vocab, int* fallback_warnings = nullptr);

// Deterministic scripted backend: judge() pops the score queue (throws
// BackendError when exhausted). Until script_scores is first called the
// judge self-scores from a hash of the rationale text instead, so batch
// generation needs no script. Text methods derive output from their
// inputs, making every call reproducible.
class MockBackend : public RationaleBackend {
 public:
  MockBackend(const Vocabulary& vocab, std::uint64_t seed);

  std::string id() const override { return "mock"; }
  std::string pseudo_rationale(const std::string& image_id, RationaleKind kind,
                               const std::string& situation) override;
  int judge(const std::string& rationale, const std::string& situation) override;
  std::string refine(const std::string& rationale, const std::string& situation,
                     int score) override;
  std::string negative(const std::string& positive_text,
                       const std::string& situation) override;

  void script_scores(std::vector<int> scores);
  int fallback_warnings() const { return fallback_warnings_; }

 private:
  const Vocabulary& vocab_;
  std::map<std::string, std::string> table_;
  std::deque<int> scores_;
  bool scripted_ = false;
  std::uint64_t seed_;
  int fallback_warnings_ = 0;
};

}  // namespace ovgsr
