#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ovgsr/tape.hpp"

// Network-level building blocks shared by the alignment and student
// modules: multi-head attention over token matrices plus parameter
// initialization helpers.
namespace ovgsr {

template <typename T>
struct AttentionParams {
  Parameter<T> wq;   // [D, D]
  Parameter<T> wkv;  // [D, 2D], keys in the first D columns
  Parameter<T> wo;   // [D, D]

  std::vector<Parameter<T>*> collect() { return {&wq, &wkv, &wo}; }
};

// Normal(0, 1/fan_in) weights; fan_in is the row count of a [in, out]
// matrix, so activations keep their scale through projection stacks
// that have no normalization layers.
template <typename T>
Tensor<T> xavier(std::int64_t in, std::int64_t out, std::mt19937_64& rng) {
  return randn<T>({in, out}, rng, T(1) / std::sqrt(static_cast<T>(in)));
}

template <typename T>
AttentionParams<T> make_attention(const std::string& prefix, std::int64_t d,
                                  std::mt19937_64& rng) {
  AttentionParams<T> p;
  p.wq = Parameter<T>(prefix + ".wq", xavier<T>(d, d, rng));
  p.wkv = Parameter<T>(prefix + ".wkv", xavier<T>(d, 2 * d, rng));
  p.wo = Parameter<T>(prefix + ".wo", xavier<T>(d, d, rng));
  return p;
}

// Multi-head scaled dot-product cross attention.
// queries [Lq, D] attend over kv_tokens [Lk, D]; returns [Lq, D].
template <typename T>
Var<T> cross_attention(Var<T> queries, Var<T> kv_tokens, AttentionParams<T>& p,
                       int heads) {
  Tape<T>& t = *queries.tape;
  const std::int64_t d = t.val(queries).cols();
  if (t.val(kv_tokens).cols() != d)
    throw ShapeMismatch("cross_attention: query/key width mismatch");
  if (heads < 1 || d % heads != 0)
    throw ShapeMismatch("cross_attention: head count must divide width");
  const std::int64_t dh = d / heads;
  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

  Var<T> q = matmul(queries, t.param(p.wq));
  Var<T> kv = matmul(kv_tokens, t.param(p.wkv));
  Var<T> k = split_cols(kv, 0, d);
  Var<T> v = split_cols(kv, d, 2 * d);

  std::vector<Var<T>> heads_out;
  heads_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t c0 = h * dh, c1 = (h + 1) * dh;
    Var<T> qh = heads == 1 ? q : split_cols(q, c0, c1);
    Var<T> kh = heads == 1 ? k : split_cols(k, c0, c1);
    Var<T> vh = heads == 1 ? v : split_cols(v, c0, c1);
    Var<T> scores = scale(matmul(qh, kh, false, true), inv_sqrt_dh);
    heads_out.push_back(matmul(softmax_rows(scores), vh));
  }
  Var<T> merged = heads == 1 ? heads_out[0] : concat_cols(heads_out);
  return matmul(merged, t.param(p.wo));
}

// Self-attention block with a residual path: x + attention(x over x).
template <typename T>
Var<T> residual_self_attention(Var<T> x, AttentionParams<T>& p, int heads) {
  return add(x, cross_attention(x, x, p, heads));
}

}  // namespace ovgsr
