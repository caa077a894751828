#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ovgsr/alignment.hpp"
#include "ovgsr/grad_check.hpp"
#include "ovgsr/nn.hpp"
#include "ovgsr/prompts.hpp"
#include "ovgsr/tape.hpp"
#include "ovgsr/tensor.hpp"

using namespace ovgsr;

namespace {

// Plain-loop multi-head attention over raw matrices, written without the
// tape so it can serve as an oracle. Head i uses column block
// [i*dh, (i+1)*dh) of the projected matrices.
Tensor<double> brute_attention(const Tensor<double>& queries,
                               const Tensor<double>& kv, const Tensor<double>& wq,
                               const Tensor<double>& wkv, const Tensor<double>& wo,
                               int heads) {
  const std::int64_t lq = queries.rows(), lk = kv.rows(), d = queries.cols();
  const std::int64_t dh = d / heads;
  auto mm = [](const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> c({a.rows(), b.cols()});
    for (std::int64_t i = 0; i < a.rows(); ++i)
      for (std::int64_t l = 0; l < a.cols(); ++l)
        for (std::int64_t j = 0; j < b.cols(); ++j)
          c.at(i, j) += a.at(i, l) * b.at(l, j);
    return c;
  };
  Tensor<double> q = mm(queries, wq);
  Tensor<double> kvp = mm(kv, wkv);
  Tensor<double> merged({lq, d});
  for (int hd = 0; hd < heads; ++hd) {
    for (std::int64_t i = 0; i < lq; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(lk));
      double mx = -1e300;
      for (std::int64_t j = 0; j < lk; ++j) {
        double s = 0;
        for (std::int64_t c = 0; c < dh; ++c)
          s += q.at(i, hd * dh + c) * kvp.at(j, hd * dh + c);
        scores[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (auto& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::int64_t j = 0; j < lk; ++j)
        for (std::int64_t c = 0; c < dh; ++c)
          merged.at(i, hd * dh + c) += scores[static_cast<std::size_t>(j)] / z *
                                       kvp.at(j, d + hd * dh + c);
    }
  }
  return mm(merged, wo);
}

AttentionParams<double> seeded_attention(std::int64_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_attention<double>("a", d, rng);
}

}  // namespace

TEST_CASE("glimpse alignment with one rationale token collapses to one row") {
  const int h = 3, w = 4, p = 1, d = 8, heads = 2;
  std::mt19937_64 rng(21);
  auto params = seeded_attention(d, 22);
  Tape<double> tape;
  Var<double> out = align_glimpse(
      tape.constant(randn<double>({h * w, d}, rng, 1.0)),
      std::optional<Var<double>>(
          tape.constant(randn<double>({scene_prompt_cells(h, w, p), d}, rng, 1.0))),
      SceneStyle::Grow, tape.constant(randn<double>({1, d}, rng, 1.0)), params,
      heads, h, w, p);
  Tensor<double> o = tape.val(out);
  REQUIRE(o.rows() == h * w);
  for (std::int64_t i = 1; i < o.rows(); ++i)
    for (std::int64_t c = 0; c < d; ++c)
      REQUIRE(o.at(i, c) == doctest::Approx(o.at(0, c)).epsilon(1e-12));
}

TEST_CASE("glimpse alignment with zero-valued rationale tokens is zero") {
  const int h = 3, w = 3, p = 1, d = 4, heads = 2;
  std::mt19937_64 rng(31);
  auto params = seeded_attention(d, 32);
  Tape<double> tape;
  Var<double> out = align_glimpse(
      tape.constant(randn<double>({h * w, d}, rng, 1.0)),
      std::optional<Var<double>>(
          tape.constant(randn<double>({scene_prompt_cells(h, w, p), d}, rng, 1.0))),
      SceneStyle::Grow, tape.constant(Tensor<double>({3, d})), params, heads, h, w,
      p);
  Tensor<double> o = tape.val(out);
  for (std::int64_t i = 0; i < o.numel(); ++i) REQUIRE(o.data()[i] == 0.0);
}

TEST_CASE("glimpse alignment matches a hand-rolled oracle on a 3x3 grid") {
  const int h = 3, w = 3, p = 1, d = 4, heads = 2;
  std::mt19937_64 rng(41);
  Tensor<double> tok = randn<double>({h * w, d}, rng, 1.0);
  Tensor<double> cells = randn<double>({scene_prompt_cells(h, w, p), d}, rng, 1.0);
  Tensor<double> rat = randn<double>({2, d}, rng, 1.0);
  auto params = seeded_attention(d, 42);

  Tape<double> tape;
  Tensor<double> got = tape.val(align_glimpse(
      tape.constant(tok), std::optional<Var<double>>(tape.constant(cells)),
      SceneStyle::Grow, tape.constant(rat), params, heads, h, w, p));

  // Assemble the augmented grid independently: fold outer coordinates
  // onto the boundary frame and look the cell up in row-major frame
  // order.
  auto fold = [p](int i, int n) {
    return i < p ? i : (i >= n + p ? i - 2 * p : i - p);
  };
  auto border = scene_border_cells(h, w, p);
  const int ah = h + 2 * p, aw = w + 2 * p;
  Tensor<double> aug({ah * aw, d});
  for (int i = 0; i < ah; ++i)
    for (int j = 0; j < aw; ++j) {
      const bool interior = i >= p && i < h + p && j >= p && j < w + p;
      for (int c = 0; c < d; ++c) {
        double v;
        if (interior) {
          v = tok.at((i - p) * w + (j - p), c);
        } else {
          const int ci = fold(i, h), cj = fold(j, w);
          std::int64_t k = -1;
          for (std::size_t b = 0; b < border.size(); ++b)
            if (border[b].first == ci && border[b].second == cj)
              k = static_cast<std::int64_t>(b);
          v = cells.at(k, c);
        }
        aug.at(i * aw + j, c) = v;
      }
    }
  Tensor<double> full =
      brute_attention(aug, rat, params.wq.value, params.wkv.value, params.wo.value,
                      heads);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < d; ++c)
        REQUIRE(got.at(i * w + j, c) ==
                doctest::Approx(full.at((i + p) * aw + (j + p), c)).epsilon(1e-6));
}

TEST_CASE("glimpse alignment is invariant to rationale token order") {
  const int h = 3, w = 4, p = 1, d = 8, heads = 4;
  std::mt19937_64 rng(51);
  Tensor<double> tok = randn<double>({h * w, d}, rng, 1.0);
  Tensor<double> cells = randn<double>({scene_prompt_cells(h, w, p), d}, rng, 1.0);
  Tensor<double> rat = randn<double>({5, d}, rng, 1.0);
  Tensor<double> perm({5, d});
  const int order[5] = {3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < d; ++c) perm.at(i, c) = rat.at(order[i], c);
  auto params = seeded_attention(d, 52);

  auto run = [&](const Tensor<double>& r) {
    Tape<double> tape;
    return tape.val(align_glimpse(
        tape.constant(tok), std::optional<Var<double>>(tape.constant(cells)),
        SceneStyle::Grow, tape.constant(r), params, heads, h, w, p));
  };
  Tensor<double> a = run(rat), b = run(perm);
  for (std::int64_t i = 0; i < a.numel(); ++i)
    REQUIRE(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-10));
}

TEST_CASE("pad-style scene prompt changes outputs but keeps the grid") {
  const int h = 3, w = 3, p = 1, d = 4, heads = 1;
  std::mt19937_64 rng(61);
  Tensor<double> tok = randn<double>({h * w, d}, rng, 1.0);
  Tensor<double> cells = randn<double>({scene_prompt_cells(h, w, p), d}, rng, 1.0);
  Tensor<double> rat = randn<double>({3, d}, rng, 1.0);
  auto params = seeded_attention(d, 62);
  auto run = [&](SceneStyle s) {
    Tape<double> tape;
    return tape.val(align_glimpse(tape.constant(tok),
                                  std::optional<Var<double>>(tape.constant(cells)),
                                  s, tape.constant(rat), params, heads, h, w, p));
  };
  Tensor<double> grow = run(SceneStyle::Grow), pad = run(SceneStyle::Pad);
  REQUIRE(grow.rows() == h * w);
  REQUIRE(pad.rows() == h * w);
  double diff = 0;
  for (std::int64_t i = 0; i < grow.numel(); ++i)
    diff = std::max(diff, std::abs(grow.data()[i] - pad.data()[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("gaze alignment: single box and single token reduces to value row") {
  const int h = 4, w = 4, d = 6, heads = 3, gh = 2, gw = 2;
  std::mt19937_64 rng(71);
  auto params = seeded_attention(d, 72);
  Tensor<double> rat = randn<double>({1, d}, rng, 1.0);
  Tape<double> tape;
  Var<double> out = align_gaze(
      tape.constant(randn<double>({h * w, d}, rng, 1.0)), {NormBox{0.2, 0.2, 0.8, 0.8}},
      {0}, std::optional<Var<double>>{}, tape.constant(rat), params, heads, h, w, gh, gw);
  Tensor<double> o = tape.val(out);
  REQUIRE(o.rows() == 1);

  // Expected: the single rationale token through wkv's value half, then wo.
  Tensor<double> expect({1, d});
  for (std::int64_t j = 0; j < d; ++j) {
    double vj = 0;
    for (std::int64_t l = 0; l < d; ++l)
      vj += rat.at(0, l) * params.wkv.value.at(l, d + j);
    expect.at(0, j) = vj;
  }
  for (std::int64_t j = 0; j < d; ++j) {
    double oj = 0;
    for (std::int64_t l = 0; l < d; ++l) oj += expect.at(0, l) * params.wo.value.at(l, j);
    REQUIRE(o.at(0, j) == doctest::Approx(oj).epsilon(1e-9));
  }
}

TEST_CASE("gaze alignment: identical boxes with matching slots give identical rows") {
  const int h = 5, w = 5, d = 8, heads = 2, gh = 3, gw = 3;
  std::mt19937_64 rng(81);
  auto params = seeded_attention(d, 82);
  Tape<double> tape;
  Tensor<double> inst({2 * gh * gw, d});  // zero prompt grids
  Var<double> out = align_gaze(
      tape.constant(randn<double>({h * w, d}, rng, 1.0)),
      {NormBox{0.1, 0.3, 0.7, 0.9}, NormBox{0.1, 0.3, 0.7, 0.9}}, {0, 1},
      std::optional<Var<double>>(tape.constant(inst)),
      tape.constant(randn<double>({4, d}, rng, 1.0)), params, heads, h, w, gh, gw);
  Tensor<double> o = tape.val(out);
  REQUIRE(o.rows() == 2);
  for (std::int64_t c = 0; c < d; ++c)
    REQUIRE(o.at(0, c) == doctest::Approx(o.at(1, c)).epsilon(1e-12));
}

TEST_CASE("gaze alignment matches chained bilinear + attention oracles") {
  const int h = 4, w = 5, d = 6, heads = 2, gh = 3, gw = 3;
  std::mt19937_64 rng(91);
  Tensor<double> tok = randn<double>({h * w, d}, rng, 1.0);
  Tensor<double> inst = randn<double>({3 * gh * gw, d}, rng, 0.2);
  Tensor<double> rat = randn<double>({3, d}, rng, 1.0);
  const NormBox box{0.25, 0.25, 0.75, 0.75};
  const int slot = 2;
  auto params = seeded_attention(d, 92);

  Tape<double> tape;
  Tensor<double> got = tape.val(align_gaze(
      tape.constant(tok), {box}, {slot},
      std::optional<Var<double>>(tape.constant(inst)), tape.constant(rat), params,
      heads, h, w, gh, gw));

  // Oracle: explicit bilinear sampling, prompt add, attention, mean.
  Tensor<double> grid({gh * gw, d});
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const double fy = std::clamp((box.y1 + (box.y2 - box.y1) * ((gy + 0.5) / gh)) * h - 0.5,
                                   0.0, h - 1.0);
      const double fx = std::clamp((box.x1 + (box.x2 - box.x1) * ((gx + 0.5) / gw)) * w - 0.5,
                                   0.0, w - 1.0);
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double wy = fy - y0, wx = fx - x0;
      for (int c = 0; c < d; ++c)
        grid.at(gy * gw + gx, c) =
            (1 - wy) * (1 - wx) * tok.at(y0 * w + x0, c) +
            (1 - wy) * wx * tok.at(y0 * w + x1, c) +
            wy * (1 - wx) * tok.at(y1 * w + x0, c) + wy * wx * tok.at(y1 * w + x1, c) +
            inst.at(slot * gh * gw + gy * gw + gx, c);
    }
  Tensor<double> attn =
      brute_attention(grid, rat, params.wq.value, params.wkv.value, params.wo.value,
                      heads);
  for (int c = 0; c < d; ++c) {
    double m = 0;
    for (int i = 0; i < gh * gw; ++i) m += attn.at(i, c);
    m /= gh * gw;
    REQUIRE(got.at(0, c) == doctest::Approx(m).epsilon(1e-6));
  }
}

TEST_CASE("negative loss fixed values and bounds") {
  const int d = 4;
  auto rows_of = [](const std::vector<double>& v, int n) {
    Tensor<double> t({n, static_cast<std::int64_t>(v.size())});
    for (int i = 0; i < n; ++i)
      for (std::size_t c = 0; c < v.size(); ++c) t.at(i, static_cast<std::int64_t>(c)) = v[c];
    return t;
  };
  auto vec_of = [](const std::vector<double>& v) {
    Tensor<double> t({static_cast<std::int64_t>(v.size())});
    for (std::size_t c = 0; c < v.size(); ++c) t.data()[c] = v[c];
    return t;
  };

  {
    // Pooled visual vectors equal to the pooled negatives: cos 1 twice.
    Tape<double> tape;
    Var<double> l = negative_loss(
        tape.constant(rows_of({1, 2, 3, 4}, 5)), tape.constant(rows_of({4, 3, 2, 1}, 2)),
        tape.constant(vec_of({1, 2, 3, 4})), tape.constant(vec_of({4, 3, 2, 1})),
        NegSign::AsPrinted);
    CHECK(tape.val(l).at(0) == doctest::Approx(-2.0).epsilon(1e-12));
    Var<double> ld = negative_loss(
        tape.constant(rows_of({1, 2, 3, 4}, 5)), tape.constant(rows_of({4, 3, 2, 1}, 2)),
        tape.constant(vec_of({1, 2, 3, 4})), tape.constant(vec_of({4, 3, 2, 1})),
        NegSign::Diverge);
    CHECK(tape.val(ld).at(0) == doctest::Approx(2.0).epsilon(1e-12));
  }
  {
    // Orthogonal pairs.
    Tape<double> tape;
    Var<double> l = negative_loss(
        tape.constant(rows_of({1, 0, 0, 0}, 3)), tape.constant(rows_of({0, 0, 1, 0}, 2)),
        tape.constant(vec_of({0, 1, 0, 0})), tape.constant(vec_of({0, 0, 0, 1})),
        NegSign::AsPrinted);
    CHECK(tape.val(l).at(0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  {
    // cos 0.8 ([1,2] vs [2,1]) and cos -0.5 -> -(0.8 - 0.5) = -0.3.
    Tape<double> tape;
    Var<double> l = negative_loss(
        tape.constant(rows_of({1, 2}, 1)), tape.constant(rows_of({1, 0}, 1)),
        tape.constant(vec_of({2, 1})),
        tape.constant(vec_of({-0.5, std::sqrt(3.0) / 2.0})), NegSign::AsPrinted);
    CHECK(tape.val(l).at(0) == doctest::Approx(-0.3).epsilon(1e-12));
  }

  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    Tape<double> tape;
    Var<double> l = negative_loss(tape.constant(randn<double>({6, d}, rng, 1.0)),
                                  tape.constant(randn<double>({2, d}, rng, 1.0)),
                                  tape.constant(randn<double>({d}, rng, 1.0)),
                                  tape.constant(randn<double>({d}, rng, 1.0)),
                                  NegSign::AsPrinted);
    const double v = tape.val(l).at(0);
    REQUIRE(v >= -2.0 - 1e-12);
    REQUIRE(v <= 2.0 + 1e-12);
  }
}

TEST_CASE("alignment stack gradients agree with finite differences") {
  const int h = 3, w = 3, p = 1, d = 4, heads = 2, gh = 2, gw = 2;
  std::mt19937_64 rng(111);
  Tensor<double> tok = randn<double>({h * w, d}, rng, 1.0);
  Tensor<double> rat_gli = randn<double>({3, d}, rng, 1.0);
  Tensor<double> rat_gaz = randn<double>({2, d}, rng, 1.0);
  Tensor<double> gli_neg = randn<double>({d}, rng, 1.0);
  Tensor<double> gaz_neg = randn<double>({d}, rng, 1.0);

  Parameter<double> scene("scene",
                          randn<double>({scene_prompt_cells(h, w, p), d}, rng, 0.3));
  Parameter<double> inst("inst", randn<double>({2 * gh * gw, d}, rng, 0.3));
  auto pg = seeded_attention(d, 112);
  auto pz = seeded_attention(d, 113);
  pg.wq.name = "g.wq";
  pz.wq.name = "z.wq";

  std::vector<Parameter<double>*> params{&scene, &inst};
  for (auto* q : pg.collect()) params.push_back(q);
  for (auto* q : pz.collect()) params.push_back(q);

  auto run = [&](bool with_grads) {
    Tape<double> tape;
    Var<double> glimpse = align_glimpse(
        tape.constant(tok), std::optional<Var<double>>(tape.param(scene)),
        SceneStyle::Grow, tape.constant(rat_gli), pg, heads, h, w, p);
    Var<double> gaze = align_gaze(
        tape.constant(tok), {NormBox{0.1, 0.1, 0.9, 0.9}, NormBox{0.3, 0.2, 0.8, 0.7}},
        {0, 1}, std::optional<Var<double>>(tape.param(inst)), tape.constant(rat_gaz),
        pz, heads, h, w, gh, gw);
    Var<double> loss =
        add(add(mean_all(mul(glimpse, glimpse)), mean_all(mul(gaze, gaze))),
            negative_loss(glimpse, gaze, tape.constant(gli_neg),
                          tape.constant(gaz_neg), NegSign::AsPrinted));
    const double v = tape.val(loss).at(0);
    if (with_grads) tape.backward(loss);
    return v;
  };

  GradCheckOptions opt;
  opt.tol = 1e-4;
  auto report = grad_check(run, params, opt);
  CAPTURE(report.max_rel_err);
  CHECK(report.pass);
}
