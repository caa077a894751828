#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ovgsr/core.hpp"
#include "ovgsr/errors.hpp"
#include "ovgsr/nn.hpp"
#include "ovgsr/tape.hpp"
#include "ovgsr/tensor.hpp"

// The student model: the only network that runs at inference. An
// activity head scores verbs against text class embeddings, learned
// role queries pull per-role features out of the token sequence through
// two residual self-attention blocks, and a shared MLP decodes each
// role feature into a normalized box plus a presence logit.
namespace ovgsr {

inline constexpr int kRoleSlots = 6;
inline constexpr int kBoxOutputs = 5;  // cx, cy, w, h (pre-sigmoid) + presence

template <typename T>
struct BoxHeadParams {
  Parameter<T> w1, b1, w2, b2, w3, b3;

  std::vector<Parameter<T>*> collect() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
};

template <typename T>
struct StudentParams {
  Parameter<T> verb_proj;     // [D, D] activity head
  Parameter<T> fuse;          // [D, D] shared fusion projection
  AttentionParams<T> phi1, phi2;
  Parameter<T> role_proj;     // [D, D] role head
  Parameter<T> role_queries;  // [kRoleSlots, D]
  BoxHeadParams<T> box_head;

  std::vector<Parameter<T>*> collect() {
    std::vector<Parameter<T>*> out{&verb_proj, &fuse, &role_proj, &role_queries};
    for (auto* p : phi1.collect()) out.push_back(p);
    for (auto* p : phi2.collect()) out.push_back(p);
    for (auto* p : box_head.collect()) out.push_back(p);
    return out;
  }
};

// Role queries start as distinct random unit-scale directions: if they
// begin near zero the slots are interchangeable and the slot-to-role
// binding can settle into a permutation the optimizer never escapes.
template <typename T>
StudentParams<T> make_student(std::int64_t d, std::mt19937_64& rng) {
  const T query_std = T(1) / std::sqrt(static_cast<T>(d));
  StudentParams<T> s;
  s.verb_proj = Parameter<T>("student.verb_proj", xavier<T>(d, d, rng));
  s.fuse = Parameter<T>("student.fuse", xavier<T>(d, d, rng));
  s.phi1 = make_attention<T>("student.phi1", d, rng);
  s.phi2 = make_attention<T>("student.phi2", d, rng);
  s.role_proj = Parameter<T>("student.role_proj", xavier<T>(d, d, rng));
  s.role_queries =
      Parameter<T>("student.role_queries", randn<T>({kRoleSlots, d}, rng, query_std));
  s.box_head.w1 = Parameter<T>("student.box.w1", xavier<T>(d, d, rng));
  s.box_head.b1 = Parameter<T>("student.box.b1", Tensor<T>({d}));
  s.box_head.w2 = Parameter<T>("student.box.w2", xavier<T>(d, d, rng));
  s.box_head.b2 = Parameter<T>("student.box.b2", Tensor<T>({d}));
  s.box_head.w3 = Parameter<T>("student.box.w3", xavier<T>(d, kBoxOutputs, rng));
  s.box_head.b3 = Parameter<T>("student.box.b3", Tensor<T>({kBoxOutputs}));
  return s;
}

// Mean over tokens, then the activity projection: [hw, d] -> [1, d].
template <typename T>
Var<T> verb_pool(Var<T> tokens, StudentParams<T>& s) {
  Tape<T>& t = *tokens.tape;
  const std::int64_t d = t.val(tokens).cols();
  return matmul(reshape(mean_axis0(tokens), {1, d}), t.param(s.verb_proj));
}

// Scaled similarity scores against class text embeddings. Rows of
// `class_embs` are expected unit-normalized so `logit_scale` acts as a
// fixed temperature.
template <typename T>
Var<T> class_logits(Var<T> feats, const Tensor<T>& class_embs, T logit_scale) {
  Tape<T>& t = *feats.tape;
  if (t.val(feats).cols() != class_embs.cols())
    throw ShapeMismatch("class_logits: feature/embedding width mismatch");
  return scale(matmul(feats, t.constant(class_embs), false, true), logit_scale);
}

// [role queries + pooled image | tokens | verb_pool] -> fuse -> two
// residual self-attention blocks -> the first kRoleSlots rows. Adding
// the pooled image feature to every query makes each slot depend on the
// image content directly instead of only through attention mixing.
template <typename T>
Var<T> role_features(Var<T> tokens, Var<T> xbar, StudentParams<T>& s, int heads) {
  Tape<T>& t = *tokens.tape;
  const std::int64_t d = t.val(tokens).cols();
  Var<T> queries = add_row(t.param(s.role_queries), reshape(xbar, {d}));
  Var<T> seq = concat_rows<T>({queries, tokens, xbar});
  Var<T> x = matmul(seq, t.param(s.fuse));
  x = residual_self_attention(x, s.phi1, heads);
  x = residual_self_attention(x, s.phi2, heads);
  return slice_rows(x, 0, kRoleSlots);
}

// Shared 3-layer box decoder: [n, d] -> [n, 5] raw outputs. The first 4
// columns are pre-sigmoid (cx, cy, w, h), the last is the presence
// logit (negative means ABSENT).
template <typename T>
Var<T> box_raw(Var<T> role_feats, StudentParams<T>& s) {
  Tape<T>& t = *role_feats.tape;
  Var<T> x = relu(add_row(matmul(role_feats, t.param(s.box_head.w1)),
                          t.param(s.box_head.b1)));
  x = relu(add_row(matmul(x, t.param(s.box_head.w2)), t.param(s.box_head.b2)));
  return add_row(matmul(x, t.param(s.box_head.w3)), t.param(s.box_head.b3));
}

// Everything the losses need from one student pass.
template <typename T>
struct StudentOutputs {
  Var<T> tokens;       // [hw, d]
  Var<T> xbar;         // [1, d]
  Var<T> verb_logits;  // [1, n_verbs]
  Var<T> role_feats;   // [kRoleSlots, d]
  Var<T> noun_logits;  // [kRoleSlots, n_nouns]
  Var<T> box_out;      // [kRoleSlots, 5]
};

template <typename T>
StudentOutputs<T> student_forward(Var<T> tokens, const Tensor<T>& verb_embs,
                                  const Tensor<T>& noun_embs, StudentParams<T>& s,
                                  int heads, T logit_scale) {
  Tape<T>& t = *tokens.tape;
  StudentOutputs<T> o;
  o.tokens = tokens;
  o.xbar = verb_pool(tokens, s);
  o.verb_logits = class_logits(o.xbar, verb_embs, logit_scale);
  o.role_feats = role_features(tokens, o.xbar, s, heads);
  o.noun_logits =
      class_logits(matmul(o.role_feats, t.param(s.role_proj)), noun_embs, logit_scale);
  o.box_out = box_raw(o.role_feats, s);
  return o;
}

// Decoded box for one role slot; presence logit < 0 means ABSENT.
struct SlotBox {
  double cx = 0, cy = 0, w = 0, h = 0;
  double presence = 0;

  bool present() const { return presence >= 0; }

  Box to_pixels(int img_w, int img_h) const {
    Box b;
    b.x1 = (cx - w / 2) * img_w;
    b.y1 = (cy - h / 2) * img_h;
    b.x2 = (cx + w / 2) * img_w;
    b.y2 = (cy + h / 2) * img_h;
    return b;
  }
};

template <typename T>
SlotBox decode_slot_box(const Tensor<T>& box_out, int slot) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  SlotBox b;
  b.cx = sig(static_cast<double>(box_out.at(slot, 0)));
  b.cy = sig(static_cast<double>(box_out.at(slot, 1)));
  b.w = sig(static_cast<double>(box_out.at(slot, 2)));
  b.h = sig(static_cast<double>(box_out.at(slot, 3)));
  b.presence = static_cast<double>(box_out.at(slot, 4));
  return b;
}

// Full inference for one image's student tokens: top-1 verb, the
// predicted verb's ordered frame filled from the leading role slots.
template <typename T>
SituationPrediction student_infer(const Tensor<T>& tokens, const Vocabulary& vocab,
                                  const Tensor<T>& verb_embs,
                                  const Tensor<T>& noun_embs, StudentParams<T>& s,
                                  int heads, T logit_scale, int img_w, int img_h) {
  Tape<T> tape;
  StudentOutputs<T> o =
      student_forward(tape.constant(tokens), verb_embs, noun_embs, s, heads,
                      logit_scale);
  const Tensor<T> vl = tape.val(softmax_rows(o.verb_logits));
  const Tensor<T> nl = tape.val(o.noun_logits);
  const Tensor<T> bx = tape.val(o.box_out);

  SituationPrediction pred;
  pred.verb_probs.resize(static_cast<std::size_t>(vl.cols()));
  int best = 0;
  for (std::int64_t v = 0; v < vl.cols(); ++v) {
    pred.verb_probs[static_cast<std::size_t>(v)] = static_cast<double>(vl.at(0, v));
    if (vl.at(0, v) > vl.at(0, best)) best = static_cast<int>(v);
  }
  pred.verb = best;

  const auto& frame_roles = vocab.roles_of(best);
  for (std::size_t r = 0; r < frame_roles.size(); ++r) {
    RolePrediction rp;
    rp.role = frame_roles[r];
    std::int64_t best_noun = 0;
    for (std::int64_t n = 1; n < nl.cols(); ++n)
      if (nl.at(static_cast<std::int64_t>(r), n) >
          nl.at(static_cast<std::int64_t>(r), best_noun))
        best_noun = n;
    rp.noun = static_cast<int>(best_noun);
    const SlotBox sb = decode_slot_box(bx, static_cast<int>(r));
    if (sb.present()) rp.box = sb.to_pixels(img_w, img_h);
    pred.roles.push_back(rp);
  }
  return pred;
}

}  // namespace ovgsr
