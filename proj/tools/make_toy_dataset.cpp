// Generates the bundled toy corpus: a small vocabulary, annotated
// images with three annotator frames each, and synthetic pixel files.
// Fully seeded, so rerunning with the same arguments reproduces the
// committed fixtures byte for byte.
#include <iostream>

#include <CLI11.hpp>

#include "ovgsr/errors.hpp"
#include "ovgsr/toydata.hpp"

int main(int argc, char** argv) {
  CLI::App app{"toy dataset generator"};
  ovgsr::ToyDatasetOptions opt;
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--seed", opt.seed, "generator seed");
  app.add_option("--images", opt.images, "number of images");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto images = ovgsr::write_toy_dataset(opt);
    const ovgsr::Vocabulary vocab = ovgsr::toy_vocabulary();
    std::cout << "wrote " << images.size() << " images, " << vocab.n_verbs()
              << " verbs, " << vocab.n_nouns() << " nouns to " << opt.out_dir
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
