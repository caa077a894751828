#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ovgsr/grad_check.hpp"
#include "ovgsr/model.hpp"

using namespace ovgsr;

namespace {

Tensor<double> unit_rows(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> t = randn<double>({n, d}, rng, 1.0);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int c = 0; c < d; ++c) s += t.at(i, c) * t.at(i, c);
    s = std::sqrt(s);
    for (int c = 0; c < d; ++c) t.at(i, c) /= s;
  }
  return t;
}

Vocabulary tiny_vocab() {
  Vocabulary v;
  v.verbs = {"carrying", "jumping", "sleeping"};
  v.roles = {"agent", "item", "place", "tool"};
  v.nouns = {"", "person", "dog", "box", "bed", "field"};
  v.verb_role_ids = {{0, 1, 2}, {0, 2}, {0, 2, 3}};
  v.rebuild_index();
  return v;
}

ModelDims small_dims() {
  ModelDims dims;
  dims.d = 8;
  dims.teacher_h = 3;
  dims.teacher_w = 3;
  dims.scene_p = 1;
  dims.inst_grid = 2;
  dims.heads = 2;
  return dims;
}

Model<double> small_model(std::uint64_t seed) {
  const Vocabulary v = tiny_vocab();
  Model<double> m;
  m.dims = small_dims();
  std::mt19937_64 rng(seed);
  m.params = make_model_params<double>(m.dims, rng);
  m.verb_embs = unit_rows(v.n_verbs(), m.dims.d, seed + 1);
  m.noun_embs = unit_rows(v.n_nouns(), m.dims.d, seed + 2);
  return m;
}

// Verb 0 with roles (agent, item, place): boxes on agent and place,
// item marked absent. Annotators disagree on one noun.
AnnotatedImage fixture_image() {
  AnnotatedImage img;
  img.id = "img0";
  img.width = 64;
  img.height = 64;
  for (int f = 0; f < 3; ++f) {
    SituationFrame& fr = img.frames[f];
    fr.verb = 0;
    fr.roles = {{0, 1, std::nullopt}, {1, 3, std::nullopt}, {2, 5, std::nullopt}};
    if (f == 2) fr.roles[1].noun = 4;
  }
  img.frames[0].roles[0].box = Box{8, 8, 32, 40};
  img.frames[0].roles[2].box = Box{4, 4, 60, 60};
  return img;
}

struct ExampleHolder {
  AnnotatedImage image = fixture_image();
  TrainExample<double> ex;

  explicit ExampleHolder(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ex.image = &image;
    ex.teacher_tokens = randn<double>({9, 8}, rng, 1.0);
    ex.student_tokens = randn<double>({9, 8}, rng, 1.0);
    ex.gli_pos = randn<double>({2, 8}, rng, 1.0);
    ex.gaz_pos = randn<double>({3, 8}, rng, 1.0);
    ex.gli_neg = randn<double>({8}, rng, 1.0);
    ex.gaz_neg = randn<double>({8}, rng, 1.0);
  }
};

LossBreakdown run_breakdown(Model<double>& m, const TrainExample<double>& ex) {
  Tape<double> tape;
  ForwardOutputs<double> f = build_losses(tape, m, ex);
  return breakdown_of(tape, f.terms, f.total);
}

}  // namespace

TEST_CASE("model parameter factory sizes and names") {
  const ModelDims dims = small_dims();
  std::mt19937_64 rng(3);
  ModelParams<double> m = make_model_params<double>(dims, rng);

  CHECK(m.scene.value.rows() == 8);  // 2p(h + w - 2p) = 2(3 + 3 - 2)
  CHECK(m.scene.value.cols() == 8);
  CHECK(m.instance.value.rows() == kRoleSlots * 2 * 2);
  CHECK(m.instance.value.cols() == 8);

  const auto params = m.collect();
  CHECK(params.size() == 24);
  std::set<std::string> names;
  for (const auto* p : params) {
    CHECK(p->value.numel() > 0);
    names.insert(p->name);
  }
  CHECK(names.size() == params.size());
  CHECK(names.count("prompts.scene") == 1);
  CHECK(names.count("prompts.instance") == 1);
  CHECK(names.count("align_gli.wq") == 1);
  CHECK(names.count("align_gaz.wkv") == 1);
  CHECK(names.count("student.verb_proj") == 1);
}

TEST_CASE("model parameter factory is seed-deterministic") {
  const ModelDims dims = small_dims();
  std::mt19937_64 r1(11), r2(11), r3(12);
  ModelParams<double> a = make_model_params<double>(dims, r1);
  ModelParams<double> b = make_model_params<double>(dims, r2);
  ModelParams<double> c = make_model_params<double>(dims, r3);

  const auto pa = a.collect(), pb = b.collect(), pc = c.collect();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::int64_t k = 0; k < pa[i]->value.numel(); ++k)
      CHECK(pa[i]->value.at(k) == pb[i]->value.at(k));
  bool any_diff = false;
  for (std::int64_t k = 0; k < pa[0]->value.numel(); ++k)
    any_diff = any_diff || pa[0]->value.at(k) != pc[0]->value.at(k);
  CHECK(any_diff);
}

TEST_CASE("model parameter factory rejects bad geometry") {
  std::mt19937_64 rng(1);
  ModelDims dims = small_dims();

  dims.scene_p = 2;  // 3 <= 2p
  CHECK_THROWS_AS(make_model_params<double>(dims, rng), InvalidConfig);
  dims = small_dims();
  dims.heads = 3;  // does not divide d = 8
  CHECK_THROWS_AS(make_model_params<double>(dims, rng), InvalidConfig);
  dims = small_dims();
  dims.inst_grid = 0;
  CHECK_THROWS_AS(make_model_params<double>(dims, rng), InvalidConfig);
}

TEST_CASE("channel-first grids flatten to row-major tokens") {
  FeatureGrid g;
  g.d = 2;
  g.h = 2;
  g.w = 2;
  g.chw = Tensor<float>({2, 2, 2});
  for (std::int64_t i = 0; i < 8; ++i) g.chw.at(i) = static_cast<float>(i + 1);

  const Tensor<double> t = tokens_from_grid<double>(g);
  REQUIRE(t.rows() == 4);
  REQUIRE(t.cols() == 2);
  // position i holds (channel0[i], channel1[i])
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(0, 1) == 5.0);
  CHECK(t.at(3, 0) == 4.0);
  CHECK(t.at(3, 1) == 8.0);

  const Tensor<double> same = resized_tokens<double>(g, 2, 2);
  for (std::int64_t i = 0; i < 8; ++i) CHECK(same.at(i) == t.at(i));

  const Tensor<double> up = resized_tokens<double>(g, 3, 5);
  CHECK(up.rows() == 15);
  CHECK(up.cols() == 2);
}

TEST_CASE("tensor_cast preserves exactly representable values") {
  Tensor<float> a({3});
  a.at(0) = 0.5f;
  a.at(1) = -1.25f;
  a.at(2) = 3.0f;
  const Tensor<double> d = tensor_cast<double>(a);
  const Tensor<float> back = tensor_cast<float>(d);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(d.at(i) == static_cast<double>(a.at(i)));
    CHECK(back.at(i) == a.at(i));
  }
}

TEST_CASE("full forward produces all four terms and a consistent total") {
  Model<double> m = small_model(21);
  m.weights = LossWeights<double>{1.0, 0.7, 0.3, 1.2};
  ExampleHolder holder(22);

  Tape<double> tape;
  ForwardOutputs<double> f = build_losses(tape, m, holder.ex);

  REQUIRE(f.x_glimpse.has_value());
  CHECK(tape.val(*f.x_glimpse).rows() == 9);
  CHECK(tape.val(*f.x_glimpse).cols() == 8);
  REQUIRE(f.x_gaze.has_value());
  CHECK(tape.val(*f.x_gaze).rows() == 2);  // two present gold boxes
  CHECK(f.gaze_slots == std::vector<std::int64_t>{0, 2});

  REQUIRE(f.terms.sit.has_value());
  REQUIRE(f.terms.dis.has_value());
  REQUIRE(f.terms.neg.has_value());
  REQUIRE(f.terms.box.has_value());

  const LossBreakdown b = breakdown_of(tape, f.terms, f.total);
  CHECK(std::isfinite(b.total));
  CHECK(b.sit > 0);
  CHECK(b.dis > 0);
  CHECK(b.box > 0);
  CHECK(b.neg >= -2.0);
  CHECK(b.neg <= 2.0);
  const double recomposed = b.sit + 0.7 * b.dis + 0.3 * b.neg + 1.2 * b.box;
  CHECK(b.total == doctest::Approx(recomposed).epsilon(1e-12));
}

TEST_CASE("every ablation switch moves the loss breakdown") {
  Model<double> m = small_model(31);
  ExampleHolder holder(32);
  const LossBreakdown base = run_breakdown(m, holder.ex);
  CHECK(base.neg != 0.0);

  SUBCASE("scene prompt off changes teacher-side terms only") {
    m.ablate.use_scene = false;
    const LossBreakdown b = run_breakdown(m, holder.ex);
    CHECK(b.sit == base.sit);
    CHECK(b.box == base.box);
    CHECK(std::abs(b.dis - base.dis) > 1e-12);
    CHECK(std::abs(b.neg - base.neg) > 1e-12);
  }

  SUBCASE("instance prompt off changes the gaze half") {
    m.ablate.use_instance = false;
    const LossBreakdown b = run_breakdown(m, holder.ex);
    CHECK(b.sit == base.sit);
    CHECK(b.box == base.box);
    CHECK(std::abs(b.dis - base.dis) > 1e-12);
    CHECK(std::abs(b.neg - base.neg) > 1e-12);
  }

  SUBCASE("glimpse branch off drops its halves") {
    m.ablate.use_glimpse = false;
    Tape<double> tape;
    ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
    CHECK_FALSE(f.x_glimpse.has_value());
    const LossBreakdown b = breakdown_of(tape, f.terms, f.total);
    CHECK(b.sit == base.sit);
    CHECK(std::abs(b.dis - base.dis) > 1e-12);
    CHECK(std::abs(b.neg - base.neg) > 1e-12);
  }

  SUBCASE("gaze branch off drops its halves") {
    m.ablate.use_gaze = false;
    Tape<double> tape;
    ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
    CHECK_FALSE(f.x_gaze.has_value());
    const LossBreakdown b = breakdown_of(tape, f.terms, f.total);
    CHECK(b.sit == base.sit);
    CHECK(std::abs(b.dis - base.dis) > 1e-12);
    CHECK(std::abs(b.neg - base.neg) > 1e-12);
  }

  SUBCASE("negative loss off logs an exact zero") {
    m.ablate.use_neg = false;
    Tape<double> tape;
    ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
    CHECK_FALSE(f.terms.neg.has_value());
    const LossBreakdown b = breakdown_of(tape, f.terms, f.total);
    CHECK(b.neg == 0.0);
    CHECK(b.sit == base.sit);
    CHECK(b.dis == base.dis);
    CHECK(b.box == base.box);
    CHECK(b.total == doctest::Approx(base.total - base.neg).epsilon(1e-12));
  }

  SUBCASE("sign mode flips the negative term exactly") {
    m.ablate.neg_sign = NegSign::Diverge;
    const LossBreakdown b = run_breakdown(m, holder.ex);
    CHECK(b.neg == -base.neg);
    CHECK(b.sit == base.sit);
    CHECK(b.dis == base.dis);
  }

  SUBCASE("border style changes the glimpse computation") {
    m.ablate.style = SceneStyle::Grow;
    const LossBreakdown b = run_breakdown(m, holder.ex);
    CHECK(b.sit == base.sit);
    CHECK(std::abs(b.dis - base.dis) > 1e-12);
  }
}

TEST_CASE("grow-style border cells are documented-inert under cross attention") {
  Model<double> m = small_model(35);
  m.ablate.style = SceneStyle::Grow;
  ExampleHolder holder(36);

  const LossBreakdown with_scene = run_breakdown(m, holder.ex);
  m.ablate.use_scene = false;
  const LossBreakdown without_scene = run_breakdown(m, holder.ex);
  CHECK(with_scene.dis == without_scene.dis);
  CHECK(with_scene.neg == without_scene.neg);
  CHECK(with_scene.total == without_scene.total);

  m.ablate.use_scene = true;
  for (auto* p : m.params.collect()) p->zero_grad();
  Tape<double> tape;
  ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
  tape.backward(f.total);
  double mag = 0;
  for (std::int64_t i = 0; i < m.params.scene.grad.numel(); ++i)
    mag += std::abs(m.params.scene.grad.at(i));
  CHECK(mag == 0.0);
}

TEST_CASE("images without any gold box skip the gaze branch gracefully") {
  Model<double> m = small_model(41);
  ExampleHolder holder(42);
  holder.image.frames[0].roles[0].box.reset();
  holder.image.frames[0].roles[2].box.reset();

  Tape<double> tape;
  ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
  CHECK_FALSE(f.x_gaze.has_value());
  CHECK(f.x_glimpse.has_value());
  CHECK(f.gaze_slots.empty());
  REQUIRE(f.terms.dis.has_value());
  REQUIRE(f.terms.neg.has_value());
  const LossBreakdown b = breakdown_of(tape, f.terms, f.total);
  CHECK(std::isfinite(b.total));
  CHECK(b.neg >= -1.0);  // single cosine half
  CHECK(b.neg <= 1.0);
}

TEST_CASE("assembled model passes a composite gradient check") {
  Model<double> m = small_model(51);
  m.weights = LossWeights<double>{1.0, 0.7, 0.3, 1.2};
  ExampleHolder holder(52);

  auto run = [&](bool with_grads) {
    Tape<double> tape;
    ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
    const double loss = tape.val(f.total).at(0);
    if (with_grads) tape.backward(f.total);
    return loss;
  };
  const auto params = m.params.collect();
  const GradCheckReport rep = grad_check(run, params);
  CAPTURE(rep.worst.param);
  CAPTURE(rep.worst.rel_err);
  CHECK(rep.pass);
  CHECK(rep.coords_checked > 1500);
}

TEST_CASE("gradients reach every parameter when all branches are on") {
  Model<double> m = small_model(61);
  ExampleHolder holder(62);
  for (auto* p : m.params.collect()) p->zero_grad();

  Tape<double> tape;
  ForwardOutputs<double> f = build_losses(tape, m, holder.ex);
  tape.backward(f.total);
  for (auto* p : m.params.collect()) {
    double mag = 0;
    for (std::int64_t i = 0; i < p->grad.numel(); ++i)
      mag += std::abs(p->grad.at(i));
    CAPTURE(p->name);
    CHECK(mag > 0);
  }
}

TEST_CASE("inference needs only student tokens and is deterministic") {
  const Vocabulary vocab = tiny_vocab();
  Model<double> m = small_model(71);
  std::mt19937_64 rng(72);
  const Tensor<double> tokens = randn<double>({9, 8}, rng, 1.0);

  const SituationPrediction a = infer_image(m, tokens, vocab, 64, 48);
  const SituationPrediction b = infer_image(m, tokens, vocab, 64, 48);

  CHECK(a.verb >= 0);
  CHECK(a.verb < vocab.n_verbs());
  CHECK(a.roles.size() == vocab.roles_of(a.verb).size());
  CHECK(a.verb == b.verb);
  REQUIRE(a.verb_probs.size() == b.verb_probs.size());
  for (std::size_t i = 0; i < a.verb_probs.size(); ++i)
    CHECK(a.verb_probs[i] == b.verb_probs[i]);
  for (std::size_t r = 0; r < a.roles.size(); ++r) {
    CHECK(a.roles[r].noun == b.roles[r].noun);
    CHECK(a.roles[r].box.has_value() == b.roles[r].box.has_value());
  }
}
