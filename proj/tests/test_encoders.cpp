#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "ovgsr/encoders.hpp"
#include "ovgsr/errors.hpp"

using namespace ovgsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ovgsr_enc_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string binary_file(const std::string& name, const std::vector<unsigned char>& bytes) const {
    const fs::path p = path / name;
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    return p.string();
  }
};

std::vector<unsigned char> pseudo_image(std::uint64_t seed, std::size_t n = 4096) {
  std::mt19937_64 rng(seed);
  std::vector<unsigned char> v(n);
  for (auto& b : v) b = static_cast<unsigned char>(rng() & 0xff);
  return v;
}

// Independent restatement of the documented stub formula.
float oracle_element(std::uint64_t h0, std::uint64_t salt, std::uint64_t i, int dim) {
  std::uint64_t z = (h0 ^ salt ^ (0x9E3779B97F4A7C15ull * (i + 1))) + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z = z ^ (z >> 31);
  const double f = static_cast<double>(z >> 11) / 9007199254740992.0;  // 2^53
  return static_cast<float>((2.0 * f - 1.0) * std::sqrt(3.0 / dim));
}

}  // namespace

TEST_CASE("stub vision encoder: shape, determinism, input sensitivity") {
  TempDir tmp;
  const auto bytes = pseudo_image(1);
  const std::string img = tmp.binary_file("a.bin", bytes);

  EncoderConfig cfg;
  cfg.dim = 64;
  cfg.grid = 5;
  auto enc = make_vision_encoder("stub", "teacher", cfg);
  const FeatureGrid g1 = enc->encode({"a", img});
  CHECK(g1.d == 64);
  CHECK(g1.h == 5);
  CHECK(g1.w == 5);
  CHECK(g1.chw.shape() == std::vector<std::int64_t>{64, 5, 5});

  // bitwise deterministic across calls and instances
  const FeatureGrid g2 = enc->encode({"a", img});
  auto enc2 = make_vision_encoder("stub", "teacher", cfg);
  const FeatureGrid g3 = enc2->encode({"a", img});
  for (std::int64_t i = 0; i < g1.chw.numel(); ++i) {
    CHECK(g1.chw.at(i) == g2.chw.at(i));
    CHECK(g1.chw.at(i) == g3.chw.at(i));
  }

  // flipping one byte changes the features
  auto bytes2 = bytes;
  bytes2[100] ^= 0x01;
  const FeatureGrid g4 = enc->encode({"b", tmp.binary_file("b.bin", bytes2)});
  int diffs = 0;
  for (std::int64_t i = 0; i < g1.chw.numel(); ++i)
    if (g1.chw.at(i) != g4.chw.at(i)) ++diffs;
  CHECK(diffs > g1.chw.numel() / 2);

  // teacher and student towers disagree by construction
  auto student = make_vision_encoder("stub", "student", cfg);
  const FeatureGrid gs = student->encode({"a", img});
  int same = 0;
  for (std::int64_t i = 0; i < g1.chw.numel(); ++i)
    if (g1.chw.at(i) == gs.chw.at(i)) ++same;
  CHECK(same < 10);
  CHECK(enc->param_checksum() != student->param_checksum());
  CHECK(enc->param_checksum() == enc2->param_checksum());

  CHECK_THROWS_AS(enc->encode({"x", (tmp.path / "missing.bin").string()}), DecodeError);
  CHECK_THROWS_AS(make_vision_encoder("clip-vit", "teacher", cfg), EncoderUnavailable);
}

TEST_CASE("stub vision encoder matches the documented element formula") {
  TempDir tmp;
  const auto bytes = pseudo_image(2, 512);
  const std::string img = tmp.binary_file("a.bin", bytes);

  EncoderConfig cfg;
  cfg.dim = 32;
  cfg.grid = 3;
  cfg.seed = 77;
  auto enc = make_vision_encoder("stub", "teacher", cfg);
  const FeatureGrid g = enc->encode({"a", img});

  const std::uint64_t h0 = fnv1a64(bytes.data(), bytes.size());
  const std::string key = "teacher:stub";
  const std::uint64_t salt = splitmix64(fnv1a64(key.data(), key.size()) ^ 77ull);
  for (std::uint64_t i : {0ull, 1ull, 17ull, 287ull}) {
    CHECK(g.chw.at(static_cast<std::int64_t>(i)) ==
          doctest::Approx(oracle_element(h0, salt, i, 32)).epsilon(1e-12));
  }

  // element scale keeps expected token norm near one
  double sumsq = 0;
  for (std::int64_t i = 0; i < g.chw.numel(); ++i)
    sumsq += static_cast<double>(g.chw.at(i)) * g.chw.at(i);
  const double mean_token_sq = sumsq / (g.h * g.w);  // tokens have dim elements
  CHECK(mean_token_sq == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("stub text encoder: lengths, pooling, and errors") {
  EncoderConfig cfg;
  cfg.dim = 48;
  auto enc = make_text_encoder("stub", cfg);

  CHECK_THROWS_AS(enc->encode(""), EmptyText);
  CHECK_THROWS_AS(enc->encode("   \t  "), EmptyText);

  const TextEmbedding one = enc->encode("hugging");
  CHECK(one.tokens.shape() == std::vector<std::int64_t>{1, 48});

  const TextEmbedding three = enc->encode("a man hugging");
  CHECK(three.tokens.rows() == 3);

  std::string many;
  for (int i = 0; i < 25; ++i) many += "word" + std::to_string(i) + " ";
  CHECK(enc->encode(many).tokens.rows() == 16);  // cap

  // pooled is the token mean
  for (int d = 0; d < 48; ++d) {
    const float mean = (three.tokens.at(0, d) + three.tokens.at(1, d) + three.tokens.at(2, d)) / 3.f;
    CHECK(three.pooled.at(d) == doctest::Approx(mean).epsilon(1e-6));
  }

  // deterministic, distinct across texts
  const TextEmbedding again = enc->encode("hugging");
  for (std::int64_t i = 0; i < one.tokens.numel(); ++i)
    CHECK(one.tokens.at(i) == again.tokens.at(i));
  const TextEmbedding other = enc->encode("sitting");
  int same = 0;
  for (std::int64_t i = 0; i < 48; ++i)
    if (one.tokens.at(0, i) == other.tokens.at(0, i)) ++same;
  CHECK(same < 5);
}

TEST_CASE("class embedding matrix is unit-normalized and handles the blank noun") {
  EncoderConfig cfg;
  cfg.dim = 40;
  auto enc = make_text_encoder("stub", cfg);
  const Tensor<float> m = class_embedding_matrix(*enc, {"man", "woman", "", "dog"});
  CHECK(m.shape() == std::vector<std::int64_t>{4, 40});
  for (std::int64_t r = 0; r < 4; ++r) {
    double norm = 0;
    for (std::int64_t c = 0; c < 40; ++c) norm += static_cast<double>(m.at(r, c)) * m.at(r, c);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // the blank noun row equals the embedding of the word "empty"
  const TextEmbedding e = enc->encode("empty");
  double norm = 0;
  for (int c = 0; c < 40; ++c) norm += static_cast<double>(e.pooled.at(c)) * e.pooled.at(c);
  norm = std::sqrt(norm);
  for (int c = 0; c < 40; ++c)
    CHECK(m.at(2, c) == doctest::Approx(e.pooled.at(c) / norm).epsilon(1e-6));
}

TEST_CASE("bilinear grid resize: identity, constants, and a hand oracle") {
  FeatureGrid src;
  src.d = 2;
  src.h = 2;
  src.w = 2;
  src.chw = Tensor<float>::from({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});

  const FeatureGrid same = resize_bilinear(src, 2, 2);
  for (std::int64_t i = 0; i < 8; ++i) CHECK(same.chw.at(i) == src.chw.at(i));

  FeatureGrid flat;
  flat.d = 1;
  flat.h = 3;
  flat.w = 3;
  flat.chw = Tensor<float>::full({1, 3, 3}, 7.f);
  const FeatureGrid up = resize_bilinear(flat, 7, 5);
  CHECK(up.h == 7);
  CHECK(up.w == 5);
  for (std::int64_t i = 0; i < up.chw.numel(); ++i)
    CHECK(up.chw.at(i) == doctest::Approx(7.f));

  // center of a 2x2 -> 1x1 resize averages all four values
  const FeatureGrid mid = resize_bilinear(src, 1, 1);
  CHECK(mid.chw.at(0) == doctest::Approx((1 + 2 + 3 + 4) / 4.0f));
  CHECK(mid.chw.at(1) == doctest::Approx(25.0f));

  // 2x2 -> 4x4: sample positions follow (x+0.5)*scale-0.5 with clamping
  const FeatureGrid four = resize_bilinear(src, 4, 4);
  auto at = [&](int c, int y, int x) { return four.chw.at((c * 4 + y) * 4 + x); };
  CHECK(at(0, 0, 0) == doctest::Approx(1.0f));          // clamped corner
  CHECK(at(0, 3, 3) == doctest::Approx(4.0f));
  CHECK(at(0, 0, 1) == doctest::Approx(1.25f));         // fx = 0.25
  CHECK(at(0, 1, 0) == doctest::Approx(1.5f));          // fy = 0.25 of rows 1,3
  CHECK(at(1, 1, 1) == doctest::Approx(0.75f * (10 * 0.75f + 20 * 0.25f) +
                                       0.25f * (30 * 0.75f + 40 * 0.25f)));
}
