#include "ovgsr/core.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace ovgsr {

using nlohmann::json;

namespace {

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(std::string(what) + ": cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw MalformedAnnotation(std::string(what) + ": " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out) throw Error(std::string(what) + ": cannot write " + path);
  out << j.dump(2) << "\n";
}

int lookup(const std::unordered_map<std::string, int>& index, const std::string& s,
           const char* kind) {
  auto it = index.find(s);
  if (it == index.end())
    throw UnknownSymbol(std::string(kind) + " not in vocabulary: '" + s + "'");
  return it->second;
}

}  // namespace

void Vocabulary::rebuild_index() {
  verb_index_.clear();
  role_index_.clear();
  noun_index_.clear();
  for (std::size_t i = 0; i < verbs.size(); ++i) verb_index_[verbs[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < roles.size(); ++i) role_index_[roles[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < nouns.size(); ++i) noun_index_[nouns[i]] = static_cast<int>(i);
}

int Vocabulary::verb_id(const std::string& s) const { return lookup(verb_index_, s, "verb"); }
int Vocabulary::role_id(const std::string& s) const { return lookup(role_index_, s, "role"); }
int Vocabulary::noun_id(const std::string& s) const { return lookup(noun_index_, s, "noun"); }

const std::vector<int>& Vocabulary::roles_of(int verb) const {
  if (verb < 0 || verb >= n_verbs())
    throw UnknownSymbol("verb id out of range: " + std::to_string(verb));
  return verb_role_ids[static_cast<std::size_t>(verb)];
}

void validate_frame(const SituationFrame& f, const Vocabulary& vocab) {
  const std::vector<int>& expect = vocab.roles_of(f.verb);
  if (f.roles.size() != expect.size())
    throw MalformedAnnotation("frame has " + std::to_string(f.roles.size()) +
                              " roles, verb '" + vocab.verbs[static_cast<std::size_t>(f.verb)] +
                              "' expects " + std::to_string(expect.size()));
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (f.roles[i].role != expect[i])
      throw MalformedAnnotation("frame role order does not match verb frame");
    if (f.roles[i].noun < 0 || f.roles[i].noun >= vocab.n_nouns())
      throw UnknownSymbol("noun id out of range");
  }
}

Vocabulary load_vocabulary(const std::string& path) {
  const json j = read_json_file(path, "vocabulary");
  Vocabulary v;
  try {
    v.verbs = j.at("verbs").get<std::vector<std::string>>();
    v.roles = j.at("roles").get<std::vector<std::string>>();
    v.nouns = j.at("nouns").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw MalformedAnnotation(std::string("vocabulary: ") + e.what());
  }
  v.rebuild_index();
  if (!j.contains("verb_roles"))
    throw MalformedAnnotation("vocabulary: missing verb_roles");
  v.verb_role_ids.assign(v.verbs.size(), {});
  for (const auto& [verb, roles] : j.at("verb_roles").items()) {
    const int vid = v.verb_id(verb);
    std::vector<int>& ids = v.verb_role_ids[static_cast<std::size_t>(vid)];
    for (const auto& r : roles) ids.push_back(v.role_id(r.get<std::string>()));
    if (ids.empty() || ids.size() > 6)
      throw MalformedAnnotation("vocabulary: verb '" + verb +
                                "' must have 1..6 roles, has " + std::to_string(ids.size()));
  }
  for (std::size_t i = 0; i < v.verbs.size(); ++i)
    if (v.verb_role_ids[i].empty())
      throw MalformedAnnotation("vocabulary: verb '" + v.verbs[i] + "' missing from verb_roles");
  return v;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  json vr = json::object();
  for (std::size_t i = 0; i < vocab.verbs.size(); ++i) {
    json arr = json::array();
    for (int r : vocab.verb_role_ids[i]) arr.push_back(vocab.roles[static_cast<std::size_t>(r)]);
    vr[vocab.verbs[i]] = std::move(arr);
  }
  const json j = {{"verbs", vocab.verbs},
                  {"roles", vocab.roles},
                  {"nouns", vocab.nouns},
                  {"verb_roles", std::move(vr)}};
  write_json_file(j, path, "vocabulary");
}

namespace {

std::optional<Box> parse_box(const json& arr, const std::string& image_id, int width,
                             int height) {
  if (!arr.is_array() || arr.size() != 4)
    throw MalformedAnnotation(image_id + ": box must be a 4-element array");
  const double x1 = arr[0].get<double>(), y1 = arr[1].get<double>();
  const double x2 = arr[2].get<double>(), y2 = arr[3].get<double>();
  if (x1 == -1 && y1 == -1 && x2 == -1 && y2 == -1) return std::nullopt;
  if (x1 >= x2 || y1 >= y2)
    throw DegenerateBox(image_id + ": box has non-positive extent");
  if (x1 < 0 || y1 < 0 || x2 > width || y2 > height)
    throw MalformedAnnotation(image_id + ": box outside image bounds");
  return Box{x1, y1, x2, y2};
}

}  // namespace

std::vector<AnnotatedImage> load_annotations(const std::string& path,
                                             const Vocabulary& vocab) {
  const json j = read_json_file(path, "annotations");
  if (!j.is_object()) throw MalformedAnnotation("annotations: top level must be an object");
  std::vector<AnnotatedImage> out;
  out.reserve(j.size());
  for (const auto& [image_id, entry] : j.items()) {
    AnnotatedImage img;
    img.id = image_id;
    if (!entry.contains("verb") || !entry.contains("frames") || !entry.contains("bb") ||
        !entry.contains("width") || !entry.contains("height"))
      throw MalformedAnnotation(image_id + ": missing field");
    const int verb = vocab.verb_id(entry.at("verb").get<std::string>());
    img.width = entry.at("width").get<int>();
    img.height = entry.at("height").get<int>();
    if (img.width <= 0 || img.height <= 0)
      throw MalformedAnnotation(image_id + ": non-positive image size");

    const auto& frames = entry.at("frames");
    if (!frames.is_array() || frames.size() != 3)
      throw MalformedAnnotation(image_id + ": exactly 3 annotator frames required");

    const std::vector<int>& role_ids = vocab.roles_of(verb);
    const auto& bb = entry.at("bb");
    std::vector<std::optional<Box>> boxes;
    boxes.reserve(role_ids.size());
    for (int rid : role_ids) {
      const std::string& rname = vocab.roles[static_cast<std::size_t>(rid)];
      if (!bb.contains(rname))
        throw MalformedAnnotation(image_id + ": missing box entry for role '" + rname + "'");
      boxes.push_back(parse_box(bb.at(rname), image_id, img.width, img.height));
    }

    for (std::size_t f = 0; f < 3; ++f) {
      SituationFrame& frame = img.frames[f];
      frame.verb = verb;
      const auto& fj = frames[f];
      if (!fj.is_object() || fj.size() != role_ids.size())
        throw MalformedAnnotation(image_id + ": frame roles disagree with verb frame");
      for (std::size_t i = 0; i < role_ids.size(); ++i) {
        const std::string& rname = vocab.roles[static_cast<std::size_t>(role_ids[i])];
        if (!fj.contains(rname))
          throw MalformedAnnotation(image_id + ": frame missing role '" + rname + "'");
        RoleAssignment ra;
        ra.role = role_ids[i];
        ra.noun = vocab.noun_id(fj.at(rname).get<std::string>());
        ra.box = boxes[i];
        frame.roles.push_back(ra);
      }
      validate_frame(frame, vocab);
    }
    out.push_back(std::move(img));
  }
  std::sort(out.begin(), out.end(),
            [](const AnnotatedImage& a, const AnnotatedImage& b) { return a.id < b.id; });
  return out;
}

void save_annotations(const std::vector<AnnotatedImage>& images, const Vocabulary& vocab,
                      const std::string& path) {
  json j = json::object();
  for (const AnnotatedImage& img : images) {
    json frames = json::array();
    for (const SituationFrame& f : img.frames) {
      json fj = json::object();
      for (const RoleAssignment& ra : f.roles)
        fj[vocab.roles[static_cast<std::size_t>(ra.role)]] =
            vocab.nouns[static_cast<std::size_t>(ra.noun)];
      frames.push_back(std::move(fj));
    }
    json bb = json::object();
    for (const RoleAssignment& ra : img.frames[0].roles) {
      json arr = json::array();
      if (ra.box)
        arr = {ra.box->x1, ra.box->y1, ra.box->x2, ra.box->y2};
      else
        arr = {-1, -1, -1, -1};
      bb[vocab.roles[static_cast<std::size_t>(ra.role)]] = std::move(arr);
    }
    j[img.id] = {{"verb", vocab.verbs[static_cast<std::size_t>(img.frames[0].verb)]},
                 {"frames", std::move(frames)},
                 {"bb", std::move(bb)},
                 {"width", img.width},
                 {"height", img.height}};
  }
  write_json_file(j, path, "annotations");
}

std::vector<std::int64_t> verb_counts(const std::vector<AnnotatedImage>& images,
                                      int n_verbs) {
  if (images.empty()) throw EmptyDataset("verb_counts: empty dataset");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_verbs), 0);
  for (const AnnotatedImage& img : images)
    ++counts.at(static_cast<std::size_t>(img.frames[0].verb));
  return counts;
}

std::vector<int> verbs_by_frequency(const std::vector<std::int64_t>& counts) {
  std::vector<int> order;
  for (std::size_t v = 0; v < counts.size(); ++v)
    if (counts[v] > 0) order.push_back(static_cast<int>(v));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ca = counts[static_cast<std::size_t>(a)];
    const auto cb = counts[static_cast<std::size_t>(b)];
    if (ca != cb) return ca > cb;
    return a < b;
  });
  return order;
}

}  // namespace ovgsr
