#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovgsr/alignment.hpp"
#include "ovgsr/model.hpp"
#include "ovgsr/rationales.hpp"

// Run configuration: an INI-style file with sections [data], [model],
// [prompt], [jrg], [optim], [loss]. Every key can also be set on the
// command line as a flag of the same dotted name. A canonical rendering
// of all keys is hashed into a fingerprint that checkpoints and reports
// carry, so artifacts are traceable to their exact settings.
namespace ovgsr {

struct RunConfig {
  // [data]
  std::string data_vocab;
  std::string data_annotations;
  std::string data_images_dir;
  std::string data_split;  // empty: train on everything, no held-out eval
  std::string data_cache = "rationales.jsonl";
  std::string data_out_dir = "runs";

  // [model]
  int model_d = 512;
  int model_heads = 8;
  int model_grid = 7;  // teacher grid; student tokens are resized to it
  std::string model_teacher = "stub";
  std::string model_student = "stub";
  std::string model_text = "stub";
  double model_logit_scale = 10.0;

  // [prompt]
  int prompt_p = 1;
  int prompt_grid = 3;
  double prompt_init_std = 0.02;
  std::string prompt_style = "pad";  // pad: border ring add; grow: attach+strip
  bool prompt_use_scene = true;
  bool prompt_use_instance = true;
  bool prompt_use_glimpse = true;
  bool prompt_use_gaze = true;

  // [jrg]
  int jrg_n = 8;
  int jrg_max_rounds = 5;
  int jrg_parallel = 4;
  std::string jrg_backend = "mock";
  std::string jrg_base_url = "http://localhost:8080";
  std::string jrg_model = "judge-v1";
  std::string jrg_templates = "templates";

  // [optim]
  double optim_lr = 1e-4;
  double optim_weight_decay = 1e-4;
  double optim_beta1 = 0.9;
  double optim_beta2 = 0.999;
  int optim_epochs = 10;
  int optim_batch = 32;
  std::uint64_t optim_seed = 0;

  // [loss]
  double loss_w_sit = 1.0;
  double loss_w_dis = 1.0;
  double loss_w_neg = 1.0;
  double loss_w_box = 1.0;
  bool loss_use_neg = true;
  std::string loss_neg_sign = "as_printed";  // key: loss.neg_loss.sign
};

// One entry per key, in canonical (section, declaration) order.
struct ConfigField {
  enum class Kind { Int, U64, Double, Bool, Str };
  std::string key;  // dotted, e.g. "optim.lr"
  Kind kind;
  void* ptr;
};

std::vector<ConfigField> config_fields(RunConfig& cfg);

// Parse "key=value" semantics shared by file loading and CLI overrides;
// unknown keys and unparseable values raise InvalidConfig.
void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

// Defaults overlaid with the file's sections. Unknown sections or keys
// fail loudly; later duplicates win.
RunConfig load_config(const std::string& path);

// Range/enum validation; called by consumers before a run starts.
void validate_config(const RunConfig& cfg);

// Sorted-by-registry "key=value" lines; doubles in round-trip precision.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_fingerprint(const RunConfig& cfg);

// Enum bridges (throw InvalidConfig on unknown spellings).
SceneStyle style_of(const RunConfig& cfg);
NegSign neg_sign_of(const RunConfig& cfg);

// Typed views consumed by the model and trainer.
ModelDims dims_of(const RunConfig& cfg);
Ablations ablations_of(const RunConfig& cfg);
JrgOptions jrg_of(const RunConfig& cfg);

template <typename T>
LossWeights<T> weights_of(const RunConfig& cfg) {
  return LossWeights<T>{static_cast<T>(cfg.loss_w_sit),
                        static_cast<T>(cfg.loss_w_dis),
                        static_cast<T>(cfg.loss_w_neg),
                        static_cast<T>(cfg.loss_w_box)};
}

}  // namespace ovgsr
