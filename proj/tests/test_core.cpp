#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "ovgsr/core.hpp"

using namespace ovgsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ovgsr_core_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
};

const char* kVocabJson = R"({
  "verbs": ["hugging", "jumping", "sitting"],
  "roles": ["agent", "hugged", "place", "obstacle"],
  "nouns": ["", "man", "woman", "dog", "park", "fence", "bench"],
  "verb_roles": {
    "hugging": ["agent", "hugged", "place"],
    "jumping": ["agent", "obstacle", "place"],
    "sitting": ["agent", "place"]
  }
})";

const char* kAnnoJson = R"({
  "img_a.jpg": {
    "verb": "hugging",
    "frames": [
      {"agent": "man", "hugged": "woman", "place": "park"},
      {"agent": "man", "hugged": "woman", "place": ""},
      {"agent": "woman", "hugged": "man", "place": "park"}
    ],
    "bb": {"agent": [10, 20, 110, 220], "hugged": [100, 30, 200, 230], "place": [-1, -1, -1, -1]},
    "width": 640, "height": 480
  },
  "img_b.jpg": {
    "verb": "sitting",
    "frames": [
      {"agent": "dog", "place": "bench"},
      {"agent": "dog", "place": "bench"},
      {"agent": "dog", "place": "park"}
    ],
    "bb": {"agent": [0, 0, 64, 64], "place": [5, 5, 60, 60]},
    "width": 64, "height": 64
  }
})";

}  // namespace

TEST_CASE("vocabulary loads with symbol lookup both ways") {
  TempDir tmp;
  const Vocabulary v = load_vocabulary(tmp.file("vocab.json", kVocabJson));
  CHECK(v.n_verbs() == 3);
  CHECK(v.n_roles() == 4);
  CHECK(v.n_nouns() == 7);
  CHECK(v.verb_id("hugging") == 0);
  CHECK(v.verbs[static_cast<std::size_t>(v.verb_id("sitting"))] == "sitting");
  CHECK(v.noun_id("") == 0);  // the empty noun is a real vocabulary entry
  CHECK(v.roles_of(v.verb_id("sitting")).size() == 2);
  CHECK(v.roles_of(v.verb_id("hugging")) ==
        std::vector<int>{v.role_id("agent"), v.role_id("hugged"), v.role_id("place")});
  CHECK_THROWS_AS((void)v.verb_id("flying"), UnknownSymbol);
  CHECK_THROWS_AS((void)v.noun_id("unicorn"), UnknownSymbol);
}

TEST_CASE("annotations load, validate, and round-trip") {
  TempDir tmp;
  const Vocabulary v = load_vocabulary(tmp.file("vocab.json", kVocabJson));
  const auto images = load_annotations(tmp.file("anno.json", kAnnoJson), v);
  REQUIRE(images.size() == 2);

  const AnnotatedImage& a = images[0];  // sorted by id
  CHECK(a.id == "img_a.jpg");
  CHECK(a.frames[0].verb == v.verb_id("hugging"));
  CHECK(a.n_frame_roles() == 3);
  // annotators may disagree on nouns but share verb and boxes
  CHECK(a.frames[0].roles[0].noun == v.noun_id("man"));
  CHECK(a.frames[2].roles[0].noun == v.noun_id("woman"));
  CHECK(a.frames[1].roles[2].noun == v.noun_id(""));
  for (const auto& f : a.frames) CHECK(f.verb == a.frames[0].verb);
  REQUIRE(a.box_of(0).has_value());
  CHECK(a.box_of(0)->x1 == 10);
  CHECK(a.box_of(0)->y2 == 220);
  CHECK_FALSE(a.box_of(2).has_value());  // [-1,-1,-1,-1] means absent
  for (std::size_t r = 0; r < 3; ++r) {
    const bool p0 = a.frames[0].roles[r].box.has_value();
    CHECK(a.frames[1].roles[r].box.has_value() == p0);
    CHECK(a.frames[2].roles[r].box.has_value() == p0);
  }

  // round trip preserves everything
  const std::string out = (tmp.path / "roundtrip.json").string();
  save_annotations(images, v, out);
  const auto again = load_annotations(out, v);
  REQUIRE(again.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(again[i].id == images[i].id);
    CHECK(again[i].width == images[i].width);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(again[i].frames[f].verb == images[i].frames[f].verb);
      REQUIRE(again[i].frames[f].roles.size() == images[i].frames[f].roles.size());
      for (std::size_t r = 0; r < images[i].frames[f].roles.size(); ++r) {
        CHECK(again[i].frames[f].roles[r].noun == images[i].frames[f].roles[r].noun);
        CHECK(again[i].frames[f].roles[r].box.has_value() ==
              images[i].frames[f].roles[r].box.has_value());
        if (images[i].frames[f].roles[r].box) {
          CHECK(again[i].frames[f].roles[r].box->x1 == images[i].frames[f].roles[r].box->x1);
          CHECK(again[i].frames[f].roles[r].box->y2 == images[i].frames[f].roles[r].box->y2);
        }
      }
    }
  }
}

TEST_CASE("annotation validation failures") {
  TempDir tmp;
  const Vocabulary v = load_vocabulary(tmp.file("vocab.json", kVocabJson));

  auto load_one = [&](const std::string& name, const std::string& body) {
    return load_annotations(tmp.file(name, body), v);
  };

  // unknown noun
  CHECK_THROWS_AS(
      load_one("u.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "alien", "place": "park"}, {"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "bb": {"agent": [0,0,5,5], "place": [-1,-1,-1,-1]}, "width": 10, "height": 10}})"),
      UnknownSymbol);

  // inverted box extent
  CHECK_THROWS_AS(
      load_one("d.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "bb": {"agent": [5,0,5,5], "place": [-1,-1,-1,-1]}, "width": 10, "height": 10}})"),
      DegenerateBox);

  // box outside image bounds
  CHECK_THROWS_AS(
      load_one("o.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "bb": {"agent": [0,0,20,5], "place": [-1,-1,-1,-1]}, "width": 10, "height": 10}})"),
      MalformedAnnotation);

  // missing field
  CHECK_THROWS_AS(
      load_one("m.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "width": 10, "height": 10}})"),
      MalformedAnnotation);

  // frame roles disagree with the verb's frame
  CHECK_THROWS_AS(
      load_one("r.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "dog", "obstacle": "fence"}, {"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "bb": {"agent": [0,0,5,5], "place": [-1,-1,-1,-1]}, "width": 10, "height": 10}})"),
      MalformedAnnotation);

  // two frames instead of three
  CHECK_THROWS_AS(
      load_one("f.json", R"({"x.jpg": {"verb": "sitting",
        "frames": [{"agent": "dog", "place": "park"}, {"agent": "dog", "place": "park"}],
        "bb": {"agent": [0,0,5,5], "place": [-1,-1,-1,-1]}, "width": 10, "height": 10}})"),
      MalformedAnnotation);
}

TEST_CASE("verb frequency counts and deterministic ordering") {
  const int n_verbs = 5;
  std::vector<AnnotatedImage> images;
  auto add = [&](int verb, int n) {
    for (int i = 0; i < n; ++i) {
      AnnotatedImage img;
      img.id = "img" + std::to_string(images.size());
      img.frames[0].verb = verb;
      img.frames[1].verb = verb;
      img.frames[2].verb = verb;
      images.push_back(img);
    }
  };
  add(3, 4);
  add(0, 2);
  add(4, 4);  // tie with verb 3
  add(1, 7);

  const auto counts = verb_counts(images, n_verbs);
  CHECK(counts == std::vector<std::int64_t>{2, 7, 0, 4, 4});

  // brute-force oracle: stable sort pairs by (-count, id)
  std::vector<std::pair<std::int64_t, int>> oracle;
  for (int vb = 0; vb < n_verbs; ++vb)
    if (counts[static_cast<std::size_t>(vb)] > 0)
      oracle.emplace_back(-counts[static_cast<std::size_t>(vb)], vb);
  std::sort(oracle.begin(), oracle.end());
  std::vector<int> expect;
  for (auto& [c, vb] : oracle) expect.push_back(vb);

  CHECK(verbs_by_frequency(counts) == expect);
  CHECK(verbs_by_frequency(counts) == std::vector<int>{1, 3, 4, 0});

  CHECK_THROWS_AS(verb_counts({}, 3), EmptyDataset);
}
