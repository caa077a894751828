#pragma once

#include <optional>
#include <vector>

#include "ovgsr/errors.hpp"
#include "ovgsr/nn.hpp"
#include "ovgsr/prompts.hpp"
#include "ovgsr/tape.hpp"

// Rationale-guided feature alignment: frozen teacher tokens, wrapped in
// learnable prompts, cross-attend to rationale text tokens. The glimpse
// branch produces a full token map, the gaze branch one pooled vector
// per annotated box. A separate scalar loss pushes the pooled outputs
// relative to crafted negative rationales.
namespace ovgsr {

// How the scene prompt joins the teacher grid. Pad (the default) adds
// the cells onto the teacher's own width-p boundary ring, leaving the
// inner tokens untouched; the prompt then shapes the ring's attention
// queries and stays trainable. Grow instead attaches the cells as an
// extra border frame ((h+2p) x (w+2p)) that is stripped again after
// attention — under per-query cross-attention the stripped rows are the
// only ones the prompt reaches, so this comparison arm trains with the
// prompt inert.
enum class SceneStyle { Grow, Pad };

enum class NegSign { AsPrinted, Diverge };

// teacher_tokens [h*w, d], scene_cells [2p(h+w-2p), d] or nullopt,
// rationale_tokens [L, d]  ->  [h*w, d]
template <typename T>
Var<T> align_glimpse(Var<T> teacher_tokens, std::optional<Var<T>> scene_cells,
                     SceneStyle style, Var<T> rationale_tokens,
                     AttentionParams<T>& params, int heads, int h, int w,
                     int p) {
  Var<T> queries = teacher_tokens;
  bool grew = false;
  if (scene_cells) {
    if (style == SceneStyle::Grow) {
      queries = attach_scene_prompt(teacher_tokens, *scene_cells, h, w, p);
      grew = true;
    } else {
      queries = add_border_prompt(teacher_tokens, *scene_cells, h, w, p);
    }
  }
  Var<T> out = cross_attention(queries, rationale_tokens, params, heads);
  if (grew) out = gather_rows(out, scene_interior_map(h, w, p));
  return out;
}

// One box: bilinear gh x gw patch grid (+ its role slot's prompt grid)
// attends to the gaze rationale, mean-pooled to a [1, d] row.
template <typename T>
Var<T> align_gaze_one(Var<T> teacher_tokens, const NormBox& box,
                      std::optional<Var<T>> prompt_slot, Var<T> rationale_tokens,
                      AttentionParams<T>& params, int heads, int h, int w,
                      int gh, int gw) {
  Var<T> grid = extract_box_grid(teacher_tokens, h, w, box, gh, gw);
  if (prompt_slot) {
    Tape<T>& t = *teacher_tokens.tape;
    if (t.val(*prompt_slot).rows() != static_cast<std::int64_t>(gh) * gw)
      throw ShapeMismatch("align_gaze_one: prompt slot rows != gh*gw");
    grid = add(grid, *prompt_slot);
  }
  Var<T> out = cross_attention(grid, rationale_tokens, params, heads);
  Var<T> pooled = mean_axis0(out);
  const std::int64_t d = teacher_tokens.tape->val(teacher_tokens).cols();
  return reshape(pooled, {1, d});
}

// All boxes of one image; slots[i] picks the prompt grid added to box i.
// instance_cells is the stacked parameter [n_slots*gh*gw, d] or nullopt.
// Returns [boxes.size(), d].
template <typename T>
Var<T> align_gaze(Var<T> teacher_tokens, const std::vector<NormBox>& boxes,
                  const std::vector<int>& slots,
                  std::optional<Var<T>> instance_cells, Var<T> rationale_tokens,
                  AttentionParams<T>& params, int heads, int h, int w,
                  int gh, int gw) {
  if (boxes.empty()) throw ShapeMismatch("align_gaze: no boxes");
  if (boxes.size() != slots.size())
    throw ShapeMismatch("align_gaze: slots/boxes length mismatch");
  std::vector<Var<T>> rows;
  rows.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    std::optional<Var<T>> slot;
    if (instance_cells) {
      const std::int64_t per = static_cast<std::int64_t>(gh) * gw;
      slot = slice_rows(*instance_cells, slots[i] * per, (slots[i] + 1) * per);
    }
    rows.push_back(align_gaze_one(teacher_tokens, boxes[i], slot, rationale_tokens,
                                  params, heads, h, w, gh, gw));
  }
  return rows.size() == 1 ? rows[0] : concat_rows<T>(rows);
}

// One half of the negative-guided loss: cosine between mean-pooled
// visual tokens and a pooled negative-rationale embedding.
template <typename T>
Var<T> negative_similarity(Var<T> visual_tokens, Var<T> neg_pooled) {
  return cosine(mean_axis0(visual_tokens), neg_pooled);
}

// AsPrinted minimizes -sum (pulls toward the negatives), Diverge
// minimizes +sum (pushes away).
template <typename T>
Var<T> signed_negative(Var<T> similarity_sum, NegSign sign) {
  return scale(similarity_sum, sign == NegSign::AsPrinted ? T(-1) : T(1));
}

// -[cos(pool(glimpse), gli_neg) + cos(pool(gaze), gaz_neg)], mean pools;
// Diverge flips the overall sign. Value lies in [-2, 2].
template <typename T>
Var<T> negative_loss(Var<T> glimpse_tokens, Var<T> gaze_rows, Var<T> gli_neg_pooled,
                     Var<T> gaz_neg_pooled, NegSign sign) {
  return signed_negative(add(negative_similarity(glimpse_tokens, gli_neg_pooled),
                             negative_similarity(gaze_rows, gaz_neg_pooled)),
                         sign);
}

}  // namespace ovgsr
