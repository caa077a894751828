#include "ovgsr/encoders.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ovgsr/errors.hpp"

namespace ovgsr {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t role_salt(const std::string& role, const std::string& id,
                        std::uint64_t seed) {
  const std::string key = role + ":" + id;
  return splitmix64(fnv1a64(key.data(), key.size()) ^ seed);
}

float stub_element(std::uint64_t h0, std::uint64_t salt, std::uint64_t i, int dim) {
  const std::uint64_t u = splitmix64(h0 ^ salt ^ (0x9E3779B97F4A7C15ull * (i + 1)));
  const double f = static_cast<double>(u >> 11) * 0x1.0p-53;
  return static_cast<float>((2.0 * f - 1.0) * std::sqrt(3.0) /
                            std::sqrt(static_cast<double>(dim)));
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open image file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.empty()) throw DecodeError("empty image file: " + path);
  return fnv1a64(bytes.data(), bytes.size());
}

class StubVisionEncoder final : public VisionEncoder {
 public:
  StubVisionEncoder(std::string role, EncoderConfig cfg)
      : role_(std::move(role)), cfg_(cfg), salt_(role_salt(role_, "stub", cfg.seed)) {}

  FeatureGrid encode(const ImageRef& image) const override {
    const std::uint64_t h0 = hash_file(image.path);
    FeatureGrid g;
    g.d = cfg_.dim;
    g.h = cfg_.grid;
    g.w = cfg_.grid;
    g.chw = Tensor<float>({g.d, g.h, g.w});
    for (std::int64_t i = 0; i < g.chw.numel(); ++i)
      g.chw.at(i) = stub_element(h0, salt_, static_cast<std::uint64_t>(i), cfg_.dim);
    return g;
  }

  int dim() const override { return cfg_.dim; }
  int grid_h() const override { return cfg_.grid; }
  int grid_w() const override { return cfg_.grid; }
  std::string id() const override { return "stub"; }
  std::uint64_t param_checksum() const override { return splitmix64(salt_); }

 private:
  std::string role_;
  EncoderConfig cfg_;
  std::uint64_t salt_;
};

class StubTextEncoder final : public TextEncoder {
 public:
  explicit StubTextEncoder(EncoderConfig cfg)
      : cfg_(cfg), salt_(role_salt("text", "stub", cfg.seed)) {}

  TextEmbedding encode(const std::string& text) const override {
    std::istringstream words(text);
    int n_words = 0;
    for (std::string w; words >> w;) ++n_words;
    if (n_words == 0) throw EmptyText("text encoder: empty input");
    const int len = std::min(n_words, 16);
    const std::uint64_t h0 = fnv1a64(text.data(), text.size());

    TextEmbedding e;
    e.tokens = Tensor<float>({len, cfg_.dim});
    for (std::int64_t i = 0; i < e.tokens.numel(); ++i)
      e.tokens.at(i) = stub_element(h0, salt_, static_cast<std::uint64_t>(i), cfg_.dim);
    e.pooled = Tensor<float>({cfg_.dim});
    for (int t = 0; t < len; ++t)
      for (int d = 0; d < cfg_.dim; ++d)
        e.pooled.at(d) += e.tokens.at(t, d) / static_cast<float>(len);
    return e;
  }

  int dim() const override { return cfg_.dim; }
  std::string id() const override { return "stub"; }
  std::uint64_t param_checksum() const override { return splitmix64(salt_); }

 private:
  EncoderConfig cfg_;
  std::uint64_t salt_;
};

}  // namespace

std::unique_ptr<VisionEncoder> make_vision_encoder(const std::string& id,
                                                   const std::string& role,
                                                   const EncoderConfig& cfg) {
  if (id == "stub") return std::make_unique<StubVisionEncoder>(role, cfg);
  throw EncoderUnavailable("vision encoder '" + id +
                           "' is not bundled; only 'stub' ships with this build");
}

std::unique_ptr<TextEncoder> make_text_encoder(const std::string& id,
                                               const EncoderConfig& cfg) {
  if (id == "stub") return std::make_unique<StubTextEncoder>(cfg);
  throw EncoderUnavailable("text encoder '" + id +
                           "' is not bundled; only 'stub' ships with this build");
}

Tensor<float> class_embedding_matrix(const TextEncoder& enc,
                                     const std::vector<std::string>& names) {
  const int d = enc.dim();
  Tensor<float> m({static_cast<std::int64_t>(names.size()), d});
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string& text = names[k].empty() ? "empty" : names[k];
    const TextEmbedding e = enc.encode(text);
    double norm = 0;
    for (int j = 0; j < d; ++j) norm += static_cast<double>(e.pooled.at(j)) * e.pooled.at(j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw ZeroVector("class embedding has zero norm: " + text);
    for (int j = 0; j < d; ++j)
      m.at(static_cast<std::int64_t>(k), j) = static_cast<float>(e.pooled.at(j) / norm);
  }
  return m;
}

FeatureGrid resize_bilinear(const FeatureGrid& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeMismatch("resize_bilinear: bad output size");
  if (src.h == out_h && src.w == out_w) {
    FeatureGrid g = src;
    g.chw = src.chw.copy();
    return g;
  }
  FeatureGrid g;
  g.d = src.d;
  g.h = out_h;
  g.w = out_w;
  g.chw = Tensor<float>({src.d, out_h, out_w});
  const float sy = static_cast<float>(src.h) / static_cast<float>(out_h);
  const float sx = static_cast<float>(src.w) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    fy = std::min(std::max(fy, 0.0f), static_cast<float>(src.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < out_w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      fx = std::min(std::max(fx, 0.0f), static_cast<float>(src.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < src.d; ++c) {
        const auto at = [&](int yy, int xx) {
          return src.chw.at((static_cast<std::int64_t>(c) * src.h + yy) * src.w + xx);
        };
        const float top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
        const float bot = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
        g.chw.at((static_cast<std::int64_t>(c) * out_h + y) * out_w + x) =
            top * (1 - wy) + bot * wy;
      }
    }
  }
  return g;
}

}  // namespace ovgsr
