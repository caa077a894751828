#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ovgsr/config.hpp"
#include "ovgsr/errors.hpp"

using namespace ovgsr;

namespace {

struct TempDir {
  std::filesystem::path dir;
  TempDir() {
    dir = std::filesystem::temp_directory_path() /
          ("ovgsr_cfg_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter()++));
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& text) const {
    auto p = dir / name;
    std::ofstream out(p);
    out << text;
    return p.string();
  }
};

}  // namespace

TEST_CASE("default configuration carries the documented values") {
  RunConfig c;
  CHECK(c.model_d == 512);
  CHECK(c.model_heads == 8);
  CHECK(c.model_grid == 7);
  CHECK(c.model_logit_scale == 10.0);
  CHECK(c.prompt_p == 1);
  CHECK(c.prompt_grid == 3);
  CHECK(c.prompt_init_std == 0.02);
  CHECK(c.prompt_style == "pad");
  CHECK(c.prompt_use_scene);
  CHECK(c.prompt_use_instance);
  CHECK(c.prompt_use_glimpse);
  CHECK(c.prompt_use_gaze);
  CHECK(c.jrg_n == 8);
  CHECK(c.jrg_max_rounds == 5);
  CHECK(c.jrg_parallel == 4);
  CHECK(c.jrg_backend == "mock");
  CHECK(c.optim_lr == 1e-4);
  CHECK(c.optim_weight_decay == 1e-4);
  CHECK(c.optim_beta1 == 0.9);
  CHECK(c.optim_beta2 == 0.999);
  CHECK(c.optim_epochs == 10);
  CHECK(c.optim_batch == 32);
  CHECK(c.optim_seed == 0);
  CHECK(c.loss_w_sit == 1.0);
  CHECK(c.loss_w_dis == 1.0);
  CHECK(c.loss_w_neg == 1.0);
  CHECK(c.loss_w_box == 1.0);
  CHECK(c.loss_use_neg);
  CHECK(c.loss_neg_sign == "as_printed");
  CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("config field registry is unique and covers all six sections") {
  RunConfig c;
  auto fields = config_fields(c);
  std::set<std::string> keys, sections;
  for (const auto& f : fields) {
    CHECK(keys.insert(f.key).second);  // no duplicate names
    sections.insert(f.key.substr(0, f.key.find('.')));
    CHECK(f.ptr != nullptr);
  }
  CHECK(sections ==
        std::set<std::string>{"data", "model", "prompt", "jrg", "optim", "loss"});
}

TEST_CASE("file parsing overlays sections onto the defaults") {
  TempDir td;
  auto path = td.file("run.ini",
                      "# experiment settings\n"
                      "[data]\n"
                      "vocab = fixtures/toy/vocab.json\n"
                      "annotations = fixtures/toy/annotations.json\n"
                      "\n"
                      "[optim]\n"
                      "lr = 0.001\n"
                      "batch = 4\n"
                      "; trailing comment line\n"
                      "[prompt]\n"
                      "style = grow\n"
                      "use_gaze = false\n"
                      "[loss]\n"
                      "neg_loss.sign = diverge\n");
  RunConfig c = load_config(path);
  CHECK(c.data_vocab == "fixtures/toy/vocab.json");
  CHECK(c.data_annotations == "fixtures/toy/annotations.json");
  CHECK(c.optim_lr == 0.001);
  CHECK(c.optim_batch == 4);
  CHECK(c.prompt_style == "grow");
  CHECK_FALSE(c.prompt_use_gaze);
  CHECK(c.loss_neg_sign == "diverge");
  // untouched keys keep defaults
  CHECK(c.optim_epochs == 10);
  CHECK(c.model_d == 512);
}

TEST_CASE("file parsing rejects malformed or unknown input") {
  TempDir td;
  SUBCASE("unknown section") {
    auto p = td.file("a.ini", "[danger]\nx = 1\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("unknown key inside a known section") {
    auto p = td.file("b.ini", "[optim]\nlearning_rate = 0.1\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("key before any section") {
    auto p = td.file("c.ini", "lr = 0.1\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("missing equals sign") {
    auto p = td.file("d.ini", "[optim]\nlr 0.1\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("unparseable number") {
    auto p = td.file("e.ini", "[optim]\nlr = fast\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("unparseable bool") {
    auto p = td.file("f.ini", "[loss]\nuse_neg = maybe\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("unclosed section header") {
    auto p = td.file("g.ini", "[optim\nlr = 0.1\n");
    CHECK_THROWS_AS(load_config(p), InvalidConfig);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_config((td.dir / "nope.ini").string()), InvalidConfig);
  }
  SUBCASE("error message names the offending line") {
    auto p = td.file("h.ini", "[optim]\nlr = 0.1\nbogus = 7\n");
    try {
      load_config(p);
      FAIL("expected InvalidConfig");
    } catch (const InvalidConfig& e) {
      std::string msg = e.what();
      CHECK(msg.find(":3:") != std::string::npos);
      CHECK(msg.find("optim.bogus") != std::string::npos);
    }
  }
}

TEST_CASE("duplicate keys follow last-one-wins") {
  TempDir td;
  auto p = td.file("dup.ini", "[optim]\nlr = 0.5\nlr = 0.25\n");
  CHECK(load_config(p).optim_lr == 0.25);
}

TEST_CASE("command-line style overrides hit every field kind") {
  RunConfig c;
  apply_override(c, "optim.lr", "0.01");
  CHECK(c.optim_lr == 0.01);
  apply_override(c, "optim.batch", "8");
  CHECK(c.optim_batch == 8);
  apply_override(c, "optim.seed", "12345678901234");
  CHECK(c.optim_seed == 12345678901234ULL);
  apply_override(c, "prompt.use_scene", "false");
  CHECK_FALSE(c.prompt_use_scene);
  apply_override(c, "prompt.use_scene", "1");
  CHECK(c.prompt_use_scene);
  apply_override(c, "data.vocab", "v.json");
  CHECK(c.data_vocab == "v.json");
  apply_override(c, "loss.neg_loss.sign", "diverge");
  CHECK(c.loss_neg_sign == "diverge");
  CHECK_THROWS_AS(apply_override(c, "optim.momentum", "0.9"), InvalidConfig);
  CHECK_THROWS_AS(apply_override(c, "optim.batch", "four"), InvalidConfig);
}

TEST_CASE("overrides applied after a file load take precedence") {
  TempDir td;
  auto p = td.file("base.ini", "[optim]\nlr = 0.001\nepochs = 3\n");
  RunConfig c = load_config(p);
  apply_override(c, "optim.lr", "0.1");
  CHECK(c.optim_lr == 0.1);
  CHECK(c.optim_epochs == 3);  // file value survives where no flag was given
}

TEST_CASE("fingerprint is stable for equal configs and moves with any field") {
  RunConfig a, b;
  CHECK(config_fingerprint(a) == config_fingerprint(b));

  // flipping each individual key changes the fingerprint
  auto fields = config_fields(b);
  std::uint64_t base = config_fingerprint(a);
  for (const auto& f : fields) {
    RunConfig c;
    switch (f.kind) {
      case ConfigField::Kind::Int:
        apply_override(c, f.key, "99");
        break;
      case ConfigField::Kind::U64:
        apply_override(c, f.key, "99");
        break;
      case ConfigField::Kind::Double:
        apply_override(c, f.key, "99.5");
        break;
      case ConfigField::Kind::Bool:
        apply_override(c, f.key, "false");
        break;
      case ConfigField::Kind::Str:
        apply_override(c, f.key, "something-else");
        break;
    }
    CAPTURE(f.key);
    CHECK(config_fingerprint(c) != base);
  }
}

TEST_CASE("canonical rendering lists one line per key as key=value") {
  RunConfig c;
  std::string text = canonical_config(c);
  auto fields = config_fields(c);
  std::size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  CHECK(lines == fields.size());
  CHECK(text.find("optim.lr=0.0001") != std::string::npos);
  CHECK(text.find("model.d=512\n") != std::string::npos);
  CHECK(text.find("prompt.style=pad\n") != std::string::npos);
  CHECK(text.find("loss.use_neg=true\n") != std::string::npos);

  // round-trip: the canonical text reparses to the identical fingerprint
  RunConfig d;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    apply_override(d, line.substr(0, eq), line.substr(eq + 1));
  }
  CHECK(config_fingerprint(d) == config_fingerprint(c));
}

TEST_CASE("validation rejects out-of-range settings") {
  auto broken = [](const std::string& key, const std::string& value) {
    RunConfig c;
    apply_override(c, key, value);
    return c;
  };
  CHECK_THROWS_AS(validate_config(broken("model.d", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("model.heads", "5")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("model.grid", "2")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("prompt.p", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("prompt.init_std", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("jrg.n", "11")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("jrg.n", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("jrg.max_rounds", "-1")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("jrg.parallel", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("jrg.backend", "oracle")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("optim.lr", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("optim.beta1", "1.0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("optim.epochs", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("optim.batch", "0")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("loss.w_box", "-1")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("prompt.style", "wrap")), InvalidConfig);
  CHECK_THROWS_AS(validate_config(broken("loss.neg_loss.sign", "up")),
                  InvalidConfig);
}

TEST_CASE("typed views translate config fields into model structures") {
  RunConfig c;
  apply_override(c, "model.d", "64");
  apply_override(c, "model.heads", "4");
  apply_override(c, "model.grid", "5");
  apply_override(c, "prompt.p", "2");
  apply_override(c, "prompt.grid", "2");
  apply_override(c, "prompt.use_gaze", "false");
  apply_override(c, "loss.use_neg", "false");
  apply_override(c, "prompt.style", "grow");
  apply_override(c, "loss.neg_loss.sign", "diverge");
  apply_override(c, "jrg.n", "6");
  apply_override(c, "jrg.max_rounds", "2");

  ModelDims d = dims_of(c);
  CHECK(d.d == 64);
  CHECK(d.heads == 4);
  CHECK(d.teacher_h == 5);
  CHECK(d.teacher_w == 5);
  CHECK(d.scene_p == 2);
  CHECK(d.inst_grid == 2);

  Ablations a = ablations_of(c);
  CHECK(a.use_scene);
  CHECK(a.use_instance);
  CHECK(a.use_glimpse);
  CHECK_FALSE(a.use_gaze);
  CHECK_FALSE(a.use_neg);
  CHECK(a.style == SceneStyle::Grow);
  CHECK(a.neg_sign == NegSign::Diverge);

  JrgOptions j = jrg_of(c);
  CHECK(j.threshold_n == 6);
  CHECK(j.max_rounds == 2);

  auto w = weights_of<double>(c);
  CHECK(w.sit == 1.0);
  CHECK(w.dis == 1.0);
  CHECK(w.neg == 1.0);
  CHECK(w.box == 1.0);
}
