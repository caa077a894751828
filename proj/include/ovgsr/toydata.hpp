#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovgsr/core.hpp"

// Seeded synthetic corpus used by the bundled fixtures, the smoke tests,
// and the `make_toy_dataset` tool: a six-verb vocabulary covering frame
// sizes 2..6, annotated images with three annotator frames each, and
// deterministic pixel files. Rerunning with the same options reproduces
// the same bytes.
namespace ovgsr {

struct ToyDatasetOptions {
  std::string out_dir = "fixtures/toy";
  std::uint64_t seed = 0;
  int images = 20;
};

Vocabulary toy_vocabulary();

// Writes vocab.json, annotations.json, and images/<id>.bin under
// out_dir (creating directories) and returns the annotated images.
std::vector<AnnotatedImage> write_toy_dataset(const ToyDatasetOptions& opt);

}  // namespace ovgsr
