#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ovgsr/core.hpp"
#include "ovgsr/errors.hpp"
#include "ovgsr/student.hpp"
#include "ovgsr/tape.hpp"

// The four training loss terms and their weighted sum. Reductions are
// means over elements and batch except the situation term, which sums
// role cross-entropies as a per-image total.
namespace ovgsr {

template <typename T>
struct LossWeights {
  T sit = 1, dis = 1, neg = 1, box = 1;
};

// Per-term scalars for one batch, kept as graph nodes so the total stays
// differentiable; missing terms (e.g. disabled) are nullopt and count 0.
template <typename T>
struct LossTerms {
  std::optional<Var<T>> sit, dis, neg, box;
};

// Gold pixel box -> normalized (cx, cy, w, h) targets.
inline std::array<double, 4> norm_cxcywh(const Box& b, int img_w, int img_h) {
  return {(b.x1 + b.x2) / 2.0 / img_w, (b.y1 + b.y2) / 2.0 / img_h,
          (b.x2 - b.x1) / static_cast<double>(img_w),
          (b.y2 - b.y1) / static_cast<double>(img_h)};
}

// Verb cross-entropy plus the sum of noun cross-entropies over the gold
// frame's roles (slots beyond the frame contribute nothing).
template <typename T>
Var<T> situation_loss(Var<T> verb_logits, Var<T> noun_logits,
                      const SituationFrame& gold) {
  Tape<T>& t = *verb_logits.tape;
  const std::int64_t n_roles = static_cast<std::int64_t>(gold.roles.size());
  if (n_roles < 1 || n_roles > t.val(noun_logits).rows())
    throw ShapeMismatch("situation_loss: frame does not fit role slots");
  Var<T> loss = cross_entropy(verb_logits, {gold.verb}, Reduce::Sum);
  std::vector<std::int64_t> targets;
  targets.reserve(static_cast<std::size_t>(n_roles));
  for (const auto& ra : gold.roles) targets.push_back(ra.noun);
  return add(loss, cross_entropy(slice_rows(noun_logits, 0, n_roles), targets,
                                 Reduce::Sum));
}

// One alignment term: mean absolute element difference. Both halves of
// the distillation loss and any ablated subset reduce to sums of this.
template <typename T>
Var<T> distill_term(Var<T> teacher_side, Var<T> student_side) {
  return mean_all(absval(sub(teacher_side, student_side)));
}

// Mean |glimpse - student tokens|, plus mean |gaze - matching role
// features| when the image has present boxes.
template <typename T>
Var<T> distill_loss(Var<T> x_glimpse, Var<T> x_student,
                    std::optional<Var<T>> x_gaze,
                    std::optional<Var<T>> role_feats_for_boxes) {
  Var<T> loss = distill_term(x_glimpse, x_student);
  if (x_gaze.has_value() != role_feats_for_boxes.has_value())
    throw ShapeMismatch("distill_loss: gaze features and role features must pair");
  if (x_gaze) loss = add(loss, distill_term(*x_gaze, *role_feats_for_boxes));
  return loss;
}

// Generalized IoU for xyxy box rows: [n, 4] vs [n, 4] -> [n, 1].
// Callers guarantee positive widths/heights on at least one side
// (sigmoid-decoded predictions always qualify).
template <typename T>
Var<T> giou_rows(Var<T> a_xyxy, Var<T> b_xyxy) {
  Tape<T>& t = *a_xyxy.tape;
  const Tensor<T>& va = t.val(a_xyxy);
  if (va.cols() != 4 || t.val(b_xyxy).cols() != 4 ||
      t.val(b_xyxy).rows() != va.rows())
    throw ShapeMismatch("giou_rows: expected matching [n, 4] boxes");
  auto col = [](Var<T> m, std::int64_t c) { return split_cols(m, c, c + 1); };
  Var<T> ax1 = col(a_xyxy, 0), ay1 = col(a_xyxy, 1), ax2 = col(a_xyxy, 2),
         ay2 = col(a_xyxy, 3);
  Var<T> bx1 = col(b_xyxy, 0), by1 = col(b_xyxy, 1), bx2 = col(b_xyxy, 2),
         by2 = col(b_xyxy, 3);

  Var<T> iw = relu(sub(min_ew(ax2, bx2), max_ew(ax1, bx1)));
  Var<T> ih = relu(sub(min_ew(ay2, by2), max_ew(ay1, by1)));
  Var<T> inter = mul(iw, ih);
  Var<T> area_a = mul(sub(ax2, ax1), sub(ay2, ay1));
  Var<T> area_b = mul(sub(bx2, bx1), sub(by2, by1));
  Var<T> uni = sub(add(area_a, area_b), inter);
  Var<T> iou = div(inter, uni);

  Var<T> ew = sub(max_ew(ax2, bx2), min_ew(ax1, bx1));
  Var<T> eh = sub(max_ew(ay2, by2), min_ew(ay1, by1));
  Var<T> enclose = mul(ew, eh);
  return sub(iou, div(sub(enclose, uni), enclose));
}

// cxcywh rows -> xyxy rows on the graph.
template <typename T>
Var<T> cxcywh_to_xyxy(Var<T> b) {
  auto col = [](Var<T> m, std::int64_t c) { return split_cols(m, c, c + 1); };
  Var<T> cx = col(b, 0), cy = col(b, 1), w = col(b, 2), h = col(b, 3);
  Var<T> hw = scale(w, T(0.5)), hh = scale(h, T(0.5));
  return concat_cols<T>({sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh)});
}

// Numerically stable sigmoid BCE: softplus(l) - y*l, y in {0, 1}.
template <typename T>
Var<T> bce_logit(Var<T> logit, T target) {
  Var<T> loss = softplus(logit);
  if (target != T(0)) loss = sub(loss, scale(logit, target));
  return loss;
}

// Per-image grounding loss: mean over the gold frame's roles of
//   present gold: mean-L1(cxcywh) + (1 - GIoU) + BCE(presence, 1)
//   absent gold:  BCE(presence, 0)
// `box_out` is the raw student head output [slots, 5].
template <typename T>
Var<T> box_loss(Var<T> box_out, const SituationFrame& gold, int img_w, int img_h) {
  Tape<T>& t = *box_out.tape;
  const std::int64_t n_roles = static_cast<std::int64_t>(gold.roles.size());
  if (n_roles < 1 || n_roles > t.val(box_out).rows())
    throw ShapeMismatch("box_loss: frame does not fit role slots");

  Var<T> pred_cxcywh = sigmoid(split_cols(box_out, 0, 4));
  Var<T> presence = split_cols(box_out, 4, 5);

  std::optional<Var<T>> total;
  auto accumulate = [&](Var<T> v) { total = total ? add(*total, v) : v; };
  for (std::int64_t j = 0; j < n_roles; ++j) {
    const auto& gold_box = gold.roles[static_cast<std::size_t>(j)].box;
    Var<T> pres_logit = slice_rows(presence, j, j + 1);
    Var<T> role_loss =
        reshape(bce_logit(pres_logit, gold_box ? T(1) : T(0)), {1});
    if (gold_box) {
      if (gold_box->x2 <= gold_box->x1 || gold_box->y2 <= gold_box->y1)
        throw DegenerateBox("box_loss: inverted gold box");
      const auto g = norm_cxcywh(*gold_box, img_w, img_h);
      Tensor<T> gt({1, 4});
      for (int c = 0; c < 4; ++c) gt.at(0, c) = static_cast<T>(g[static_cast<std::size_t>(c)]);
      Var<T> gv = t.constant(gt);
      Var<T> pv = slice_rows(pred_cxcywh, j, j + 1);
      Var<T> l1 = mean_all(absval(sub(pv, gv)));
      Var<T> giou = reshape(giou_rows(cxcywh_to_xyxy(pv), cxcywh_to_xyxy(gv)), {1});
      role_loss = add(role_loss, add(l1, sub(t.scalar_const(T(1)), giou)));
    }
    accumulate(role_loss);
  }
  return scale(*total, T(1) / static_cast<T>(n_roles));
}

// Weighted sum of whatever terms are enabled; disabled terms count 0.
template <typename T>
Var<T> total_loss(Tape<T>& tape, const LossTerms<T>& terms,
                  const LossWeights<T>& w) {
  std::optional<Var<T>> out;
  auto accumulate = [&](const std::optional<Var<T>>& term, T weight) {
    if (!term) return;
    Var<T> scaled = scale(*term, weight);
    out = out ? add(*out, scaled) : scaled;
  };
  accumulate(terms.sit, w.sit);
  accumulate(terms.dis, w.dis);
  accumulate(terms.neg, w.neg);
  accumulate(terms.box, w.box);
  return out ? *out : tape.scalar_const(T(0));
}

// Plain numbers for logging; omitted terms read as 0.
struct LossBreakdown {
  double sit = 0, dis = 0, neg = 0, box = 0, total = 0;
};

template <typename T>
LossBreakdown breakdown_of(const Tape<T>& tape, const LossTerms<T>& terms,
                           Var<T> total) {
  const auto value = [&](const std::optional<Var<T>>& term) {
    return term ? static_cast<double>(tape.val(*term).at(0)) : 0.0;
  };
  LossBreakdown b;
  b.sit = value(terms.sit);
  b.dis = value(terms.dis);
  b.neg = value(terms.neg);
  b.box = value(terms.box);
  b.total = static_cast<double>(tape.val(total).at(0));
  return b;
}

}  // namespace ovgsr
