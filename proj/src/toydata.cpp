#include "ovgsr/toydata.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "ovgsr/encoders.hpp"
#include "ovgsr/errors.hpp"

namespace ovgsr {

namespace {

Box random_box(std::mt19937_64& rng, int img_w, int img_h) {
  std::uniform_real_distribution<double> center(0.35, 0.65);
  std::uniform_real_distribution<double> extent(0.25, 0.6);
  const double cx = center(rng) * img_w, cy = center(rng) * img_h;
  const double w = extent(rng) * img_w, h = extent(rng) * img_h;
  Box b;
  b.x1 = std::max(0.0, cx - w / 2);
  b.y1 = std::max(0.0, cy - h / 2);
  b.x2 = std::min(static_cast<double>(img_w), cx + w / 2);
  b.y2 = std::min(static_cast<double>(img_h), cy + h / 2);
  if (b.x2 - b.x1 < 2) b.x2 = std::min(static_cast<double>(img_w), b.x1 + 2);
  if (b.y2 - b.y1 < 2) b.y2 = std::min(static_cast<double>(img_h), b.y1 + 2);
  return b;
}

int random_content_noun(std::mt19937_64& rng, const Vocabulary& vocab) {
  // skip index 0, the blank noun
  std::uniform_int_distribution<int> pick(1, vocab.n_nouns() - 1);
  return pick(rng);
}

void write_pixels(const std::string& path, const std::string& id,
                  std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write pixel file: " + path);
  std::uint64_t state = splitmix64(fnv1a64(id.data(), id.size()) ^ seed);
  for (int i = 0; i < 64 * 64; ++i) {
    state = splitmix64(state);
    const char byte = static_cast<char>(state & 0xff);
    out.write(&byte, 1);
  }
}

}  // namespace

Vocabulary toy_vocabulary() {
  Vocabulary v;
  v.verbs = {"hugging", "carrying", "jumping", "repairing", "spraying",
             "sleeping"};
  v.roles = {"agent", "item", "place", "tool", "target", "source"};
  v.nouns = {"",      "person", "dog",   "cat",  "box", "ladder", "wall",
             "water", "grass",  "chair", "hose", "bed", "blanket"};
  v.verb_role_ids = {
      {0, 4},              // hugging: agent, target
      {0, 1, 2},           // carrying: agent, item, place
      {0, 5, 4, 2},        // jumping: agent, source, target, place
      {0, 1, 3, 4, 2},     // repairing: agent, item, tool, target, place
      {0, 1, 3, 5, 4, 2},  // spraying: all six roles
      {0, 2},              // sleeping: agent, place
  };
  v.rebuild_index();
  return v;
}

std::vector<AnnotatedImage> write_toy_dataset(const ToyDatasetOptions& opt) {
  const Vocabulary vocab = toy_vocabulary();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::filesystem::create_directories(opt.out_dir + "/images");

  std::vector<AnnotatedImage> images;
  for (int i = 0; i < opt.images; ++i) {
    AnnotatedImage img;
    char id[16];
    std::snprintf(id, sizeof(id), "img_%02d", i);
    img.id = id;
    img.width = 64;
    img.height = 64;

    const int verb = i % vocab.n_verbs();
    SituationFrame base;
    base.verb = verb;
    const std::vector<int>& role_ids = vocab.roles_of(verb);
    for (std::size_t pos = 0; pos < role_ids.size(); ++pos) {
      RoleAssignment ra;
      ra.role = role_ids[pos];
      const bool blank = pos > 0 && coin(rng) < 0.15;
      if (blank) {
        ra.noun = vocab.noun_id("");
        ra.box = std::nullopt;
      } else {
        ra.noun = random_content_noun(rng, vocab);
        const bool grounded = pos == 0 || coin(rng) < 0.8;
        ra.box = grounded ? std::optional<Box>(random_box(rng, 64, 64))
                          : std::nullopt;
      }
      base.roles.push_back(ra);
    }

    img.frames[0] = base;
    for (int a = 1; a < 3; ++a) {
      SituationFrame f = base;  // same verb, same boxes
      if (coin(rng) < 0.3) {
        std::uniform_int_distribution<std::size_t> pick(0, f.roles.size() - 1);
        f.roles[pick(rng)].noun = random_content_noun(rng, vocab);
      }
      img.frames[a] = f;
    }

    write_pixels(opt.out_dir + "/images/" + img.id + ".bin", img.id, opt.seed);
    images.push_back(std::move(img));
  }

  save_vocabulary(vocab, opt.out_dir + "/vocab.json");
  save_annotations(images, vocab, opt.out_dir + "/annotations.json");
  return images;
}

}  // namespace ovgsr
