#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovgsr/errors.hpp"

// Grounded situation data model: vocabulary, annotated images with
// three annotator frames, and prediction containers.
namespace ovgsr {

// Closed symbol sets plus the role order of every verb's frame.
// The noun list may contain "" as the distinguished empty noun used
// when an annotator left a role blank.
struct Vocabulary {
  std::vector<std::string> verbs;
  std::vector<std::string> roles;
  std::vector<std::string> nouns;
  std::vector<std::vector<int>> verb_role_ids;  // indexed by verb id

  int verb_id(const std::string& s) const;
  int role_id(const std::string& s) const;
  int noun_id(const std::string& s) const;
  const std::vector<int>& roles_of(int verb) const;

  int n_verbs() const { return static_cast<int>(verbs.size()); }
  int n_roles() const { return static_cast<int>(roles.size()); }
  int n_nouns() const { return static_cast<int>(nouns.size()); }

  void rebuild_index();

 private:
  std::unordered_map<std::string, int> verb_index_;
  std::unordered_map<std::string, int> role_index_;
  std::unordered_map<std::string, int> noun_index_;
};

// Axis-aligned box in absolute pixel corners, x1 < x2 and y1 < y2.
// Absence (no groundable region) is modeled as std::optional<Box>;
// on disk it is the sentinel [-1, -1, -1, -1].
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
};

struct RoleAssignment {
  int role = -1;
  int noun = -1;
  std::optional<Box> box;
};

// One annotator's reading of an image: a verb and its ordered frame.
// Role order always matches Vocabulary::roles_of(verb).
struct SituationFrame {
  int verb = -1;
  std::vector<RoleAssignment> roles;
};

// An image with three annotator frames over one agreed verb and one
// agreed box (or absence) per role.
struct AnnotatedImage {
  std::string id;
  int width = 0, height = 0;
  std::array<SituationFrame, 3> frames;

  const std::optional<Box>& box_of(std::size_t role_pos) const {
    return frames[0].roles.at(role_pos).box;
  }
  int n_frame_roles() const { return static_cast<int>(frames[0].roles.size()); }
};

struct RolePrediction {
  int role = -1;
  int noun = -1;
  std::optional<Box> box;
};

// Model output for one image: a verb distribution plus the frame
// predicted for the top verb.
struct SituationPrediction {
  int verb = -1;
  std::vector<double> verb_probs;        // size n_verbs, sums to 1
  std::vector<RolePrediction> roles;     // ordered frame of `verb`
};

// Validates that a frame's roles exactly mirror the verb's ordered
// role list; throws MalformedAnnotation otherwise.
void validate_frame(const SituationFrame& f, const Vocabulary& vocab);

Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

// Loads and validates annotations against the vocabulary. Unknown
// symbols, inverted boxes, boxes outside the image, and frames whose
// roles disagree with the verb all fail loudly.
std::vector<AnnotatedImage> load_annotations(const std::string& path,
                                             const Vocabulary& vocab);
void save_annotations(const std::vector<AnnotatedImage>& images,
                      const Vocabulary& vocab, const std::string& path);

// Images-per-verb histogram; throws EmptyDataset on an empty list.
std::vector<std::int64_t> verb_counts(const std::vector<AnnotatedImage>& images,
                                      int n_verbs);

// Verb ids that appear in the counts, most frequent first; ties break
// toward the smaller verb id so downstream sampling is reproducible.
std::vector<int> verbs_by_frequency(const std::vector<std::int64_t>& counts);

}  // namespace ovgsr
