#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ovgsr/tensor.hpp"

// Frozen feature producers. Teacher, student, and text encoders are
// selected by id string; only the "stub" family is bundled, real
// checkpoint-backed adapters plug in through the same interface.
//
// Stub determinism contract (tests recompute it independently):
//   h0    = fnv1a64(input bytes)
//   salt  = splitmix64(fnv1a64(role + ":" + id) ^ seed)
//   u_i   = splitmix64(h0 ^ salt ^ (0x9E3779B97F4A7C15 * (i + 1)))
//   f_i   = (u_i >> 11) * 2^-53                    in [0, 1)
//   x_i   = (2 f_i - 1) * sqrt(3) / sqrt(D)        zero mean, E||token||^2 = 1
// where i indexes elements of the output tensor in row-major order.
namespace ovgsr {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t splitmix64(std::uint64_t x);

struct ImageRef {
  std::string id;
  std::string path;
};

// Channel-first feature map, chw shaped [d, h, w].
struct FeatureGrid {
  Tensor<float> chw;
  int d = 0, h = 0, w = 0;
};

struct TextEmbedding {
  Tensor<float> tokens;  // [length, d]
  Tensor<float> pooled;  // [d], mean over tokens
};

class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;
  virtual FeatureGrid encode(const ImageRef& image) const = 0;
  virtual int dim() const = 0;
  virtual int grid_h() const = 0;
  virtual int grid_w() const = 0;
  virtual std::string id() const = 0;
  // Digest of the (frozen) weights; training asserts it never changes.
  virtual std::uint64_t param_checksum() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  // Tokens are whitespace-split words, capped at 16; empty input is an
  // EmptyText error.
  virtual TextEmbedding encode(const std::string& text) const = 0;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
  virtual std::uint64_t param_checksum() const = 0;
};

struct EncoderConfig {
  int dim = 512;
  int grid = 7;
  std::uint64_t seed = 0;
};

// role distinguishes otherwise identical stubs ("teacher" vs "student")
// so the two towers never emit the same features. Unknown ids raise
// EncoderUnavailable.
std::unique_ptr<VisionEncoder> make_vision_encoder(const std::string& id,
                                                   const std::string& role,
                                                   const EncoderConfig& cfg);
std::unique_ptr<TextEncoder> make_text_encoder(const std::string& id,
                                               const EncoderConfig& cfg);

// One unit-normalized pooled embedding per class name, stacked [K, d].
// The empty string (the blank noun) is embedded as the word "empty".
Tensor<float> class_embedding_matrix(const TextEncoder& enc,
                                     const std::vector<std::string>& names);

// Bilinear resampling of a channel-first grid to a new spatial size,
// sampling at pixel centers with edge clamping.
FeatureGrid resize_bilinear(const FeatureGrid& src, int out_h, int out_w);

}  // namespace ovgsr
