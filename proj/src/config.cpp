#include "ovgsr/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ovgsr/encoders.hpp"
#include "ovgsr/errors.hpp"

namespace ovgsr {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

void set_field(const ConfigField& f, const std::string& value) {
  const std::string v = trim(value);
  try {
    switch (f.kind) {
      case ConfigField::Kind::Int: {
        std::size_t used = 0;
        int parsed = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        *static_cast<int*>(f.ptr) = parsed;
        return;
      }
      case ConfigField::Kind::U64: {
        std::size_t used = 0;
        unsigned long long parsed = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        *static_cast<std::uint64_t*>(f.ptr) = parsed;
        return;
      }
      case ConfigField::Kind::Double: {
        std::size_t used = 0;
        double parsed = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        *static_cast<double*>(f.ptr) = parsed;
        return;
      }
      case ConfigField::Kind::Bool: {
        bool parsed = false;
        if (!parse_bool(v, parsed)) throw std::invalid_argument(v);
        *static_cast<bool*>(f.ptr) = parsed;
        return;
      }
      case ConfigField::Kind::Str:
        *static_cast<std::string*>(f.ptr) = v;
        return;
    }
  } catch (const std::exception&) {
    throw InvalidConfig("bad value for " + f.key + ": '" + v + "'");
  }
  throw InvalidConfig("bad value for " + f.key + ": '" + v + "'");
}

std::string get_field(const ConfigField& f) {
  switch (f.kind) {
    case ConfigField::Kind::Int:
      return std::to_string(*static_cast<const int*>(f.ptr));
    case ConfigField::Kind::U64:
      return std::to_string(*static_cast<const std::uint64_t*>(f.ptr));
    case ConfigField::Kind::Double: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g",
                    *static_cast<const double*>(f.ptr));
      return buf;
    }
    case ConfigField::Kind::Bool:
      return *static_cast<const bool*>(f.ptr) ? "true" : "false";
    case ConfigField::Kind::Str:
      return *static_cast<const std::string*>(f.ptr);
  }
  return "";
}

}  // namespace

std::vector<ConfigField> config_fields(RunConfig& c) {
  using K = ConfigField::Kind;
  return {
      {"data.vocab", K::Str, &c.data_vocab},
      {"data.annotations", K::Str, &c.data_annotations},
      {"data.images_dir", K::Str, &c.data_images_dir},
      {"data.split", K::Str, &c.data_split},
      {"data.cache", K::Str, &c.data_cache},
      {"data.out_dir", K::Str, &c.data_out_dir},
      {"model.d", K::Int, &c.model_d},
      {"model.heads", K::Int, &c.model_heads},
      {"model.grid", K::Int, &c.model_grid},
      {"model.teacher", K::Str, &c.model_teacher},
      {"model.student", K::Str, &c.model_student},
      {"model.text", K::Str, &c.model_text},
      {"model.logit_scale", K::Double, &c.model_logit_scale},
      {"prompt.p", K::Int, &c.prompt_p},
      {"prompt.grid", K::Int, &c.prompt_grid},
      {"prompt.init_std", K::Double, &c.prompt_init_std},
      {"prompt.style", K::Str, &c.prompt_style},
      {"prompt.use_scene", K::Bool, &c.prompt_use_scene},
      {"prompt.use_instance", K::Bool, &c.prompt_use_instance},
      {"prompt.use_glimpse", K::Bool, &c.prompt_use_glimpse},
      {"prompt.use_gaze", K::Bool, &c.prompt_use_gaze},
      {"jrg.n", K::Int, &c.jrg_n},
      {"jrg.max_rounds", K::Int, &c.jrg_max_rounds},
      {"jrg.parallel", K::Int, &c.jrg_parallel},
      {"jrg.backend", K::Str, &c.jrg_backend},
      {"jrg.base_url", K::Str, &c.jrg_base_url},
      {"jrg.model", K::Str, &c.jrg_model},
      {"jrg.templates", K::Str, &c.jrg_templates},
      {"optim.lr", K::Double, &c.optim_lr},
      {"optim.weight_decay", K::Double, &c.optim_weight_decay},
      {"optim.beta1", K::Double, &c.optim_beta1},
      {"optim.beta2", K::Double, &c.optim_beta2},
      {"optim.epochs", K::Int, &c.optim_epochs},
      {"optim.batch", K::Int, &c.optim_batch},
      {"optim.seed", K::U64, &c.optim_seed},
      {"loss.w_sit", K::Double, &c.loss_w_sit},
      {"loss.w_dis", K::Double, &c.loss_w_dis},
      {"loss.w_neg", K::Double, &c.loss_w_neg},
      {"loss.w_box", K::Double, &c.loss_w_box},
      {"loss.use_neg", K::Bool, &c.loss_use_neg},
      {"loss.neg_loss.sign", K::Str, &c.loss_neg_sign},
  };
}

void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  for (const auto& f : config_fields(cfg)) {
    if (f.key == dotted_key) {
      set_field(f, value);
      return;
    }
  }
  throw InvalidConfig("unknown config key: " + dotted_key);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file: " + path);
  static const std::unordered_set<std::string> kSections = {
      "data", "model", "prompt", "jrg", "optim", "loss"};
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw InvalidConfig(path + ":" + std::to_string(lineno) +
                            ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      if (!kSections.count(section))
        throw InvalidConfig(path + ":" + std::to_string(lineno) +
                            ": unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig(path + ":" + std::to_string(lineno) +
                          ": expected key = value, got '" + t + "'");
    if (section.empty())
      throw InvalidConfig(path + ":" + std::to_string(lineno) +
                          ": key outside any section");
    std::string key = section + "." + trim(t.substr(0, eq));
    try {
      apply_override(cfg, key, t.substr(eq + 1));
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(path + ":" + std::to_string(lineno) + ": " +
                          e.what());
    }
  }
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw InvalidConfig(msg);
  };
  need(cfg.model_d >= 1, "model.d must be >= 1");
  need(cfg.model_heads >= 1, "model.heads must be >= 1");
  need(cfg.model_d % cfg.model_heads == 0, "model.heads must divide model.d");
  need(cfg.model_grid >= 1, "model.grid must be >= 1");
  need(cfg.prompt_p >= 1, "prompt.p must be >= 1");
  need(2 * cfg.prompt_p < cfg.model_grid,
       "prompt.p too large for model.grid: ring needs 2p < grid");
  need(cfg.prompt_grid >= 1, "prompt.grid must be >= 1");
  need(cfg.prompt_init_std > 0, "prompt.init_std must be > 0");
  need(cfg.jrg_n >= 1 && cfg.jrg_n <= 10, "jrg.n must be in [1, 10]");
  need(cfg.jrg_max_rounds >= 0, "jrg.max_rounds must be >= 0");
  need(cfg.jrg_parallel >= 1, "jrg.parallel must be >= 1");
  need(cfg.jrg_backend == "mock" || cfg.jrg_backend == "http",
       "jrg.backend must be 'mock' or 'http'");
  need(cfg.optim_lr > 0, "optim.lr must be > 0");
  need(cfg.optim_weight_decay >= 0, "optim.weight_decay must be >= 0");
  need(cfg.optim_beta1 >= 0 && cfg.optim_beta1 < 1,
       "optim.beta1 must be in [0, 1)");
  need(cfg.optim_beta2 >= 0 && cfg.optim_beta2 < 1,
       "optim.beta2 must be in [0, 1)");
  need(cfg.optim_epochs >= 1, "optim.epochs must be >= 1");
  need(cfg.optim_batch >= 1, "optim.batch must be >= 1");
  need(cfg.loss_w_sit >= 0 && cfg.loss_w_dis >= 0 && cfg.loss_w_neg >= 0 &&
           cfg.loss_w_box >= 0,
       "loss weights must be >= 0");
  style_of(cfg);     // throws on unknown spelling
  neg_sign_of(cfg);  // throws on unknown spelling
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_fields(const_cast<RunConfig&>(cfg))) {
    out += f.key;
    out += '=';
    out += get_field(f);
    out += '\n';
  }
  return out;
}

std::uint64_t config_fingerprint(const RunConfig& cfg) {
  std::string c = canonical_config(cfg);
  return fnv1a64(c.data(), c.size());
}

SceneStyle style_of(const RunConfig& cfg) {
  if (cfg.prompt_style == "pad") return SceneStyle::Pad;
  if (cfg.prompt_style == "grow") return SceneStyle::Grow;
  throw InvalidConfig("prompt.style must be 'pad' or 'grow', got '" +
                      cfg.prompt_style + "'");
}

NegSign neg_sign_of(const RunConfig& cfg) {
  if (cfg.loss_neg_sign == "as_printed") return NegSign::AsPrinted;
  if (cfg.loss_neg_sign == "diverge") return NegSign::Diverge;
  throw InvalidConfig("loss.neg_loss.sign must be 'as_printed' or 'diverge', got '" +
                      cfg.loss_neg_sign + "'");
}

ModelDims dims_of(const RunConfig& cfg) {
  ModelDims d;
  d.d = cfg.model_d;
  d.teacher_h = cfg.model_grid;
  d.teacher_w = cfg.model_grid;
  d.scene_p = cfg.prompt_p;
  d.inst_grid = cfg.prompt_grid;
  d.heads = cfg.model_heads;
  return d;
}

Ablations ablations_of(const RunConfig& cfg) {
  Ablations a;
  a.use_scene = cfg.prompt_use_scene;
  a.use_instance = cfg.prompt_use_instance;
  a.use_glimpse = cfg.prompt_use_glimpse;
  a.use_gaze = cfg.prompt_use_gaze;
  a.use_neg = cfg.loss_use_neg;
  a.style = style_of(cfg);
  a.neg_sign = neg_sign_of(cfg);
  return a;
}

JrgOptions jrg_of(const RunConfig& cfg) {
  return JrgOptions{cfg.jrg_n, cfg.jrg_max_rounds};
}

}  // namespace ovgsr
