#include "ovgsr/eval.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "ovgsr/errors.hpp"

namespace ovgsr {

namespace {

using nlohmann::json;

int image_verb(const AnnotatedImage& img) { return img.frames[0].verb; }

}  // namespace

SplitSpec make_split(const std::vector<AnnotatedImage>& images,
                     const Vocabulary& vocab, std::uint64_t seed,
                     const SplitOptions& opt) {
  if (opt.k_unseen < 1 || opt.k_rare < 0 || opt.train_frac <= 0 ||
      opt.dev_frac < 0 || opt.train_frac + opt.dev_frac > 1.0)
    throw InvalidConfig("make_split: bad options");

  const std::vector<std::int64_t> counts = verb_counts(images, vocab.n_verbs());
  const std::vector<int> present = verbs_by_frequency(counts);  // count > 0 only
  if (static_cast<int>(present.size()) < opt.k_unseen + opt.k_rare)
    throw InsufficientVerbs("make_split: need at least " +
                            std::to_string(opt.k_unseen + opt.k_rare) +
                            " verbs with images, have " +
                            std::to_string(present.size()));

  std::mt19937_64 rng(seed);
  SplitSpec split;
  split.seed = seed;

  // One unseen verb per contiguous frequency stratum of the sorted list.
  const std::int64_t n = static_cast<std::int64_t>(present.size());
  for (int s = 0; s < opt.k_unseen; ++s) {
    const std::int64_t lo = s * n / opt.k_unseen;
    const std::int64_t hi = (s + 1) * n / opt.k_unseen;
    const std::int64_t pick =
        lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo));
    split.unseen_verbs.push_back(present[static_cast<std::size_t>(pick)]);
  }
  const std::set<int> unseen_set(split.unseen_verbs.begin(),
                                 split.unseen_verbs.end());

  // Rare = the lowest-frequency verbs still seen during training.
  std::vector<int> remaining;
  for (int v : present)
    if (!unseen_set.count(v)) remaining.push_back(v);
  split.rare_verbs.assign(remaining.end() - opt.k_rare, remaining.end());

  // Unseen-verb images leave the training pool entirely.
  std::vector<std::string> unseen_pool, seen_pool;
  for (const auto& img : images)
    (unseen_set.count(image_verb(img)) ? unseen_pool : seen_pool)
        .push_back(img.id);

  std::shuffle(unseen_pool.begin(), unseen_pool.end(), rng);
  const std::int64_t half = static_cast<std::int64_t>(unseen_pool.size()) / 2;
  const std::int64_t dev_take = std::min<std::int64_t>(half, opt.unseen_cap);
  const std::int64_t test_take = std::min<std::int64_t>(
      static_cast<std::int64_t>(unseen_pool.size()) - half, opt.unseen_cap);
  split.dev_unseen.assign(unseen_pool.begin(), unseen_pool.begin() + dev_take);
  split.test_unseen.assign(unseen_pool.begin() + half,
                           unseen_pool.begin() + half + test_take);

  std::shuffle(seen_pool.begin(), seen_pool.end(), rng);
  const std::int64_t ns = static_cast<std::int64_t>(seen_pool.size());
  const std::int64_t n_train = static_cast<std::int64_t>(opt.train_frac * ns);
  const std::int64_t n_dev = static_cast<std::int64_t>(opt.dev_frac * ns);
  split.train.assign(seen_pool.begin(), seen_pool.begin() + n_train);
  split.dev.assign(seen_pool.begin() + n_train, seen_pool.begin() + n_train + n_dev);
  split.test.assign(seen_pool.begin() + n_train + n_dev, seen_pool.end());

  // Dev/test carry their unseen subsets.
  split.dev.insert(split.dev.end(), split.dev_unseen.begin(), split.dev_unseen.end());
  split.test.insert(split.test.end(), split.test_unseen.begin(),
                    split.test_unseen.end());
  return split;
}

void save_split(const SplitSpec& split, const std::string& path) {
  json j;
  j["seed"] = split.seed;
  j["unseen_verbs"] = split.unseen_verbs;
  j["rare_verbs"] = split.rare_verbs;
  j["train"] = split.train;
  j["dev"] = split.dev;
  j["test"] = split.test;
  j["dev_unseen"] = split.dev_unseen;
  j["test_unseen"] = split.test_unseen;
  std::ofstream out(path);
  if (!out) throw Error("save_split: cannot write " + path);
  out << j.dump(2) << "\n";
}

SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_split: cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("load_split: " + std::string(e.what()));
  }
  SplitSpec s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.unseen_verbs = j.at("unseen_verbs").get<std::vector<int>>();
    s.rare_verbs = j.at("rare_verbs").get<std::vector<int>>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.dev = j.at("dev").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.dev_unseen = j.at("dev_unseen").get<std::vector<std::string>>();
    s.test_unseen = j.at("test_unseen").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("load_split: missing field: " + std::string(e.what()));
  }
  return s;
}

double iou(const Box& a, const Box& b) {
  if (a.x2 <= a.x1 || a.y2 <= a.y1 || b.x2 <= b.x1 || b.y2 <= b.y1)
    throw DegenerateBox("iou: empty or inverted box");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

struct ImageScore {
  bool verb_ok = false;
  int roles = 0;
  int nouns_ok = 0;
  int grounds_ok = 0;
};

ImageScore score_image(const AnnotatedImage& gold, const SituationPrediction& pred) {
  ImageScore s;
  s.verb_ok = pred.verb == gold.frames[0].verb;
  s.roles = gold.n_frame_roles();
  if (!s.verb_ok) return s;  // role credit requires the verb
  if (static_cast<int>(pred.roles.size()) != s.roles)
    throw MissingPrediction("evaluate: prediction frame size mismatch for image " +
                            gold.id);
  for (int r = 0; r < s.roles; ++r) {
    bool noun_ok = false;
    for (const auto& frame : gold.frames)
      noun_ok |= pred.roles[static_cast<std::size_t>(r)].noun ==
                 frame.roles[static_cast<std::size_t>(r)].noun;
    if (!noun_ok) continue;
    ++s.nouns_ok;
    const auto& gold_box = gold.box_of(static_cast<std::size_t>(r));
    const auto& pred_box = pred.roles[static_cast<std::size_t>(r)].box;
    const bool grounded = gold_box
                              ? (pred_box && iou(*gold_box, *pred_box) >= 0.5)
                              : !pred_box;
    if (grounded) ++s.grounds_ok;
  }
  return s;
}

void accumulate(SettingReport& rep, const ImageScore& s) {
  rep.verb.total += 1;
  rep.verb.correct += s.verb_ok ? 1 : 0;
  rep.value.total += s.roles;
  rep.value.correct += s.nouns_ok;
  rep.grnd.total += s.roles;
  rep.grnd.correct += s.grounds_ok;
  if (rep.val_all) {
    rep.val_all->total += 1;
    rep.val_all->correct += (s.verb_ok && s.nouns_ok == s.roles) ? 1 : 0;
  }
  if (rep.grnd_all) {
    rep.grnd_all->total += 1;
    rep.grnd_all->correct += (s.verb_ok && s.grounds_ok == s.roles) ? 1 : 0;
  }
}

void format_cell(std::ostringstream& out, const MetricCell& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", c.pct());
  out << buf;
}

}  // namespace

MetricReport evaluate(const std::map<std::string, SituationPrediction>& preds,
                      const std::vector<AnnotatedImage>& gold,
                      const SplitSpec& split) {
  const std::set<int> rare(split.rare_verbs.begin(), split.rare_verbs.end());
  const std::set<int> unseen(split.unseen_verbs.begin(), split.unseen_verbs.end());

  MetricReport report;
  report.all.val_all = MetricCell{};
  report.all.grnd_all = MetricCell{};

  for (const auto& img : gold) {
    auto it = preds.find(img.id);
    if (it == preds.end())
      throw MissingPrediction("evaluate: no prediction for image " + img.id);
    const ImageScore s = score_image(img, it->second);
    accumulate(report.all, s);
    if (rare.count(image_verb(img))) accumulate(report.rare, s);
    if (unseen.count(image_verb(img))) accumulate(report.unseen, s);
  }
  return report;
}

std::string render_metrics_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "setting,verb,value,val_all,grnd,grnd_all\n";
  auto row = [&](const char* name, const SettingReport& r) {
    out << name << ",";
    format_cell(out, r.verb);
    out << ",";
    format_cell(out, r.value);
    out << ",";
    if (r.val_all) format_cell(out, *r.val_all);
    out << ",";
    format_cell(out, r.grnd);
    out << ",";
    if (r.grnd_all) format_cell(out, *r.grnd_all);
    out << "\n";
  };
  row("top1_all", report.all);
  row("top1_rare", report.rare);
  row("top1_unseen", report.unseen);
  return out.str();
}

std::string render_metrics_table(const MetricReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s %10s %10s\n", "setting",
                "verb", "value", "val-all", "grnd", "grnd-all");
  out << buf;
  auto row = [&](const char* name, const SettingReport& r) {
    auto pct = [](const MetricCell& c) { return c.pct(); };
    if (r.val_all) {
      std::snprintf(buf, sizeof buf, "%-12s %10.2f %10.2f %10.2f %10.2f %10.2f\n",
                    name, pct(r.verb), pct(r.value), pct(*r.val_all), pct(r.grnd),
                    pct(*r.grnd_all));
    } else {
      std::snprintf(buf, sizeof buf, "%-12s %10.2f %10.2f %10s %10.2f %10s\n", name,
                    pct(r.verb), pct(r.value), "-", pct(r.grnd), "-");
    }
    out << buf;
  };
  row("top1_all", report.all);
  row("top1_rare", report.rare);
  row("top1_unseen", report.unseen);
  return out.str();
}

}  // namespace ovgsr
