#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ovgsr/alignment.hpp"
#include "ovgsr/core.hpp"
#include "ovgsr/encoders.hpp"
#include "ovgsr/losses.hpp"
#include "ovgsr/prompts.hpp"
#include "ovgsr/student.hpp"

// Full-model wiring: what is trainable, how one image flows from
// encoder outputs through prompting, alignment, and the student to the
// loss terms, and how the same student runs teacher-free at inference.
// Training, gradient checking, and the ablation switches all drive this
// one forward path.
namespace ovgsr {

struct ModelDims {
  int d = 512;        // shared feature width (towers and text)
  int teacher_h = 7;  // teacher grid; student tokens are resized to it
  int teacher_w = 7;
  int scene_p = 1;    // border width of the scene prompt
  int inst_grid = 3;  // per-box crop resolution (square)
  int heads = 8;
};

// Branch switches. Disabling a prompt removes its cells from the
// branch; disabling a branch removes its alignment, its distillation
// half, and its negative-similarity half; disabling the negative loss
// logs an exact 0 for that term.
struct Ablations {
  bool use_scene = true;
  bool use_instance = true;
  bool use_glimpse = true;
  bool use_gaze = true;
  bool use_neg = true;
  SceneStyle style = SceneStyle::Pad;
  NegSign neg_sign = NegSign::AsPrinted;
};

template <typename T>
struct ModelParams {
  Parameter<T> scene;     // [2p(H+W-2p), d] border cells
  Parameter<T> instance;  // [kRoleSlots * g * g, d] per-slot crop grids
  AttentionParams<T> align_gli;
  AttentionParams<T> align_gaz;
  StudentParams<T> student;

  std::vector<Parameter<T>*> collect() {
    std::vector<Parameter<T>*> out{&scene, &instance};
    for (auto* p : align_gli.collect()) out.push_back(p);
    for (auto* p : align_gaz.collect()) out.push_back(p);
    for (auto* p : student.collect()) out.push_back(p);
    return out;
  }
};

template <typename T>
ModelParams<T> make_model_params(const ModelDims& dims, std::mt19937_64& rng,
                                 T prompt_std = T(0.02)) {
  check_scene_geometry(dims.teacher_h, dims.teacher_w, dims.scene_p);
  if (dims.inst_grid < 1) throw InvalidConfig("instance grid must be >= 1");
  if (dims.heads < 1 || dims.d % dims.heads != 0)
    throw InvalidConfig("head count must divide feature width");

  ModelParams<T> m;
  const int cells =
      scene_prompt_cells(dims.teacher_h, dims.teacher_w, dims.scene_p);
  m.scene = Parameter<T>("prompts.scene",
                         randn<T>({cells, dims.d}, rng, prompt_std));
  m.instance = Parameter<T>(
      "prompts.instance",
      randn<T>({static_cast<std::int64_t>(kRoleSlots) * dims.inst_grid *
                    dims.inst_grid,
                dims.d},
               rng, prompt_std));
  m.align_gli = make_attention<T>("align_gli", dims.d, rng);
  m.align_gaz = make_attention<T>("align_gaz", dims.d, rng);
  m.student = make_student<T>(dims.d, rng);
  return m;
}

// The model plus everything constant it classifies against.
template <typename T>
struct Model {
  ModelDims dims;
  Ablations ablate;
  LossWeights<T> weights;
  T logit_scale = T(10);
  ModelParams<T> params;
  Tensor<T> verb_embs;  // [n_verbs, d] unit rows
  Tensor<T> noun_embs;  // [n_nouns, d] unit rows
};

// ---- encoder output plumbing -------------------------------------------

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& a) {
  Tensor<To> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i)
    out.at(i) = static_cast<To>(a.at(i));
  return out;
}

// [d, h, w] channel-first grid -> [h*w, d] row-major token matrix.
template <typename T>
Tensor<T> tokens_from_grid(const FeatureGrid& g) {
  Tensor<T> out({static_cast<std::int64_t>(g.h) * g.w, g.d});
  const std::int64_t hw = static_cast<std::int64_t>(g.h) * g.w;
  for (std::int64_t c = 0; c < g.d; ++c)
    for (std::int64_t i = 0; i < hw; ++i)
      out.at(i, c) = static_cast<T>(g.chw.at(c * hw + i));
  return out;
}

// Resample to the model's grid, then flatten to tokens. Both towers go
// through this so training and inference see the same layout.
template <typename T>
Tensor<T> resized_tokens(const FeatureGrid& g, int out_h, int out_w) {
  if (g.h == out_h && g.w == out_w) return tokens_from_grid<T>(g);
  return tokens_from_grid<T>(resize_bilinear(g, out_h, out_w));
}

// One image's tensors, already cast to the arithmetic type. Teacher and
// rationale fields stay undefined at inference.
template <typename T>
struct TrainExample {
  const AnnotatedImage* image = nullptr;
  Tensor<T> teacher_tokens;  // [H*W, d]
  Tensor<T> student_tokens;  // [H*W, d]
  Tensor<T> gli_pos;         // [L, d] positive glimpse rationale tokens
  Tensor<T> gaz_pos;         // [L, d] positive gaze rationale tokens
  Tensor<T> gli_neg;         // [d] pooled negative glimpse embedding
  Tensor<T> gaz_neg;         // [d] pooled negative gaze embedding
};

// ---- forward ------------------------------------------------------------

template <typename T>
struct ForwardOutputs {
  StudentOutputs<T> student;
  std::optional<Var<T>> x_glimpse;       // [H*W, d]
  std::optional<Var<T>> x_gaze;          // [n_present_boxes, d]
  std::vector<std::int64_t> gaze_slots;  // frame positions of those boxes
  LossTerms<T> terms;
  Var<T> total;
};

// The whole training-side forward pass for one image on one tape.
template <typename T>
ForwardOutputs<T> build_losses(Tape<T>& tape, Model<T>& m,
                               const TrainExample<T>& ex) {
  const AnnotatedImage& img = *ex.image;
  const SituationFrame& gold = img.frames[0];
  const Ablations& ab = m.ablate;

  ForwardOutputs<T> out;
  Var<T> student_tokens = tape.constant(ex.student_tokens);
  out.student = student_forward(student_tokens, m.verb_embs, m.noun_embs,
                                m.params.student, m.dims.heads, m.logit_scale);

  Var<T> teacher;
  if (ab.use_glimpse || ab.use_gaze)
    teacher = tape.constant(ex.teacher_tokens);

  if (ab.use_glimpse) {
    std::optional<Var<T>> scene;
    if (ab.use_scene) scene = tape.param(m.params.scene);
    out.x_glimpse = align_glimpse(teacher, scene, ab.style,
                                  tape.constant(ex.gli_pos), m.params.align_gli,
                                  m.dims.heads, m.dims.teacher_h,
                                  m.dims.teacher_w, m.dims.scene_p);
  }

  if (ab.use_gaze) {
    std::vector<NormBox> boxes;
    std::vector<int> slots;
    for (std::size_t pos = 0; pos < gold.roles.size(); ++pos) {
      const std::optional<Box>& b = gold.roles[pos].box;
      if (!b) continue;
      boxes.push_back(NormBox{b->x1 / img.width, b->y1 / img.height,
                              b->x2 / img.width, b->y2 / img.height});
      slots.push_back(static_cast<int>(pos));
      out.gaze_slots.push_back(static_cast<std::int64_t>(pos));
    }
    if (!boxes.empty()) {
      std::optional<Var<T>> inst;
      if (ab.use_instance) inst = tape.param(m.params.instance);
      out.x_gaze = align_gaze(teacher, boxes, slots, inst,
                              tape.constant(ex.gaz_pos), m.params.align_gaz,
                              m.dims.heads, m.dims.teacher_h, m.dims.teacher_w,
                              m.dims.inst_grid, m.dims.inst_grid);
    }
  }

  out.terms.sit =
      situation_loss(out.student.verb_logits, out.student.noun_logits, gold);

  std::optional<Var<T>> dis;
  if (out.x_glimpse) dis = distill_term(*out.x_glimpse, student_tokens);
  if (out.x_gaze) {
    Var<T> matched = gather_rows(out.student.role_feats, out.gaze_slots);
    Var<T> gaze_half = distill_term(*out.x_gaze, matched);
    dis = dis ? add(*dis, gaze_half) : gaze_half;
  }
  out.terms.dis = dis;

  if (ab.use_neg) {
    std::optional<Var<T>> sim;
    if (out.x_glimpse)
      sim = negative_similarity(*out.x_glimpse, tape.constant(ex.gli_neg));
    if (out.x_gaze) {
      Var<T> gaze_half =
          negative_similarity(*out.x_gaze, tape.constant(ex.gaz_neg));
      sim = sim ? add(*sim, gaze_half) : gaze_half;
    }
    if (sim) out.terms.neg = signed_negative(*sim, ab.neg_sign);
  }

  out.terms.box = box_loss(out.student.box_out, gold, img.width, img.height);
  out.total = total_loss(tape, out.terms, m.weights);
  return out;
}

// Teacher-free inference: student tokens only.
template <typename T>
SituationPrediction infer_image(Model<T>& m, const Tensor<T>& student_tokens,
                                const Vocabulary& vocab, int img_w, int img_h) {
  return student_infer(student_tokens, vocab, m.verb_embs, m.noun_embs,
                       m.params.student, m.dims.heads, m.logit_scale, img_w,
                       img_h);
}

}  // namespace ovgsr
