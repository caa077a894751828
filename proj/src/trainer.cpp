#include "ovgsr/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ovgsr/errors.hpp"
#include "ovgsr/judge_http.hpp"
#include "ovgsr/losses.hpp"
#include "ovgsr/optim.hpp"

namespace ovgsr {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << text;
  if (!out) throw Error("short write on file: " + path);
}

constexpr char kLogHeader[] = "step,l_sit,l_dis,l_neg,l_box,total";

}  // namespace

// ---- data -----------------------------------------------------------------

const AnnotatedImage* RunData::by_id(const std::string& id) const {
  for (const auto& img : images)
    if (img.id == id) return &img;
  return nullptr;
}

std::vector<const AnnotatedImage*> RunData::subset(
    const std::vector<std::string>& ids) const {
  std::vector<const AnnotatedImage*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const AnnotatedImage* img = by_id(id);
    if (!img) throw UnknownSymbol("split references unknown image id: " + id);
    out.push_back(img);
  }
  return out;
}

RunData load_run_data(const RunConfig& cfg) {
  if (cfg.data_vocab.empty()) throw InvalidConfig("data.vocab is not set");
  if (cfg.data_annotations.empty())
    throw InvalidConfig("data.annotations is not set");
  RunData data;
  data.vocab = load_vocabulary(cfg.data_vocab);
  data.images = load_annotations(cfg.data_annotations, data.vocab);
  if (cfg.data_split.empty()) {
    data.split.seed = cfg.optim_seed;
    for (const auto& img : data.images) data.split.train.push_back(img.id);
  } else {
    data.split = load_split(cfg.data_split);
  }
  return data;
}

ImageRef image_ref(const RunConfig& cfg, const std::string& id) {
  if (cfg.data_images_dir.empty())
    throw InvalidConfig("data.images_dir is not set");
  return ImageRef{id, cfg.data_images_dir + "/" + id + ".bin"};
}

std::string cache_backend_id(const RunConfig& cfg) {
  if (cfg.jrg_backend == "mock") return "mock";
  if (cfg.jrg_backend == "http") return "http:" + cfg.jrg_model;
  throw InvalidConfig("jrg.backend must be 'mock' or 'http', got '" +
                      cfg.jrg_backend + "'");
}

std::unique_ptr<RationaleBackend> make_backend(const RunConfig& cfg,
                                               const Vocabulary& vocab) {
  if (cfg.jrg_backend == "mock")
    return std::make_unique<MockBackend>(vocab, cfg.optim_seed);
  if (cfg.jrg_backend == "http") {
    HttpBackendOptions opt;
    opt.base_url = cfg.jrg_base_url;
    opt.model = cfg.jrg_model;
    opt.template_dir = cfg.jrg_templates;
    return std::make_unique<HttpBackend>(opt);
  }
  throw InvalidConfig("jrg.backend must be 'mock' or 'http', got '" +
                      cfg.jrg_backend + "'");
}

// ---- model + example preparation -------------------------------------------

Model<double> build_model(const RunConfig& cfg, const Vocabulary& vocab,
                          const TextEncoder& text) {
  Model<double> m;
  m.dims = dims_of(cfg);
  m.ablate = ablations_of(cfg);
  m.weights = weights_of<double>(cfg);
  m.logit_scale = cfg.model_logit_scale;
  std::mt19937_64 rng(cfg.optim_seed);
  m.params = make_model_params<double>(m.dims, rng, cfg.prompt_init_std);
  m.verb_embs = tensor_cast<double>(class_embedding_matrix(text, vocab.verbs));
  m.noun_embs = tensor_cast<double>(class_embedding_matrix(text, vocab.nouns));
  return m;
}

ExamplePrep prepare_examples(const RunConfig& cfg,
                             const std::vector<const AnnotatedImage*>& images,
                             const VisionEncoder* teacher,
                             const VisionEncoder& student,
                             const TextEncoder& text,
                             const RationaleCache& cache) {
  if (images.empty()) throw EmptyDataset("no training images to prepare");
  const Ablations ab = ablations_of(cfg);
  const bool needs_teacher = ab.use_glimpse || ab.use_gaze;
  if (needs_teacher && !teacher)
    throw InvalidConfig("teacher encoder required while a prompt branch is on");
  const std::string bid = cache_backend_id(cfg);
  const int grid_h = cfg.model_grid, grid_w = cfg.model_grid;

  ExamplePrep prep;
  for (const AnnotatedImage* img : images) {
    std::optional<RationaleRecord> gli_pos, gaz_pos, gli_neg, gaz_neg;
    bool missing = false;
    auto want = [&](RationaleKind k, Polarity p,
                    std::optional<RationaleRecord>& slot) {
      slot = cache.get(img->id, k, p, bid);
      if (!slot) missing = true;
    };
    if (ab.use_glimpse) {
      want(RationaleKind::Glimpse, Polarity::Positive, gli_pos);
      if (ab.use_neg) want(RationaleKind::Glimpse, Polarity::Negative, gli_neg);
    }
    if (ab.use_gaze) {
      want(RationaleKind::Gaze, Polarity::Positive, gaz_pos);
      if (ab.use_neg) want(RationaleKind::Gaze, Polarity::Negative, gaz_neg);
    }
    if (missing) {
      ++prep.skipped;
      continue;
    }

    const ImageRef ref = image_ref(cfg, img->id);
    TrainExample<double> ex;
    ex.image = img;
    ex.student_tokens =
        resized_tokens<double>(student.encode(ref), grid_h, grid_w);
    if (needs_teacher)
      ex.teacher_tokens =
          resized_tokens<double>(teacher->encode(ref), grid_h, grid_w);
    if (gli_pos)
      ex.gli_pos = tensor_cast<double>(text.encode(gli_pos->text).tokens);
    if (gaz_pos)
      ex.gaz_pos = tensor_cast<double>(text.encode(gaz_pos->text).tokens);
    if (gli_neg)
      ex.gli_neg = tensor_cast<double>(text.encode(gli_neg->text).pooled);
    if (gaz_neg)
      ex.gaz_neg = tensor_cast<double>(text.encode(gaz_neg->text).pooled);
    prep.examples.push_back(std::move(ex));
  }

  if (prep.examples.empty())
    throw EmptyDataset("every training image was skipped (no cached rationales?)");
  if (static_cast<std::size_t>(prep.skipped) * 20 > images.size())
    throw MissingRationale(std::to_string(prep.skipped) + " of " +
                           std::to_string(images.size()) +
                           " training images lack cached rationales (limit 5%)");
  return prep;
}

// ---- training loop -----------------------------------------------------------

std::string render_log_csv(const std::vector<StepLog>& log) {
  std::string out = kLogHeader;
  out += '\n';
  for (const StepLog& s : log) {
    out += std::to_string(s.step);
    for (double v : {s.sit, s.dis, s.neg, s.box, s.total}) {
      out += ',';
      out += fmt_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<StepLog> parse_log_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader)
    throw InvalidConfig("training log: missing header '" +
                        std::string(kLogHeader) + "'");
  std::vector<StepLog> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidConfig("training log line " + std::to_string(lineno) +
                            ": bad value '" + cell + "'");
      }
    }
    if (vals.size() != 6)
      throw InvalidConfig("training log line " + std::to_string(lineno) +
                          ": expected 6 fields, got " +
                          std::to_string(vals.size()));
    out.push_back(StepLog{static_cast<int>(vals[0]), vals[1], vals[2], vals[3],
                          vals[4], vals[5]});
  }
  return out;
}

std::vector<StepLog> train_model(Model<double>& model,
                                 const std::vector<TrainExample<double>>& examples,
                                 const RunConfig& cfg, const TrainHooks& hooks) {
  if (examples.empty()) throw EmptyDataset("train_model: no examples");
  const std::size_t n = examples.size();
  const std::size_t batch =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.optim_batch), n);

  std::vector<Parameter<double>*> params = model.params.collect();
  AdamW<double> opt(params, AdamWOptions{cfg.optim_lr, cfg.optim_weight_decay,
                                         cfg.optim_beta1, cfg.optim_beta2,
                                         1e-8});
  std::mt19937_64 shuffle_rng(cfg.optim_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<StepLog> log;
  int step = 0;
  for (int epoch = 0; epoch < cfg.optim_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const double bn = static_cast<double>(end - start);
      opt.zero_grad();
      StepLog acc;
      for (std::size_t k = start; k < end; ++k) {
        const TrainExample<double>& ex = examples[order[k]];
        Tape<double> tape;
        ForwardOutputs<double> out = build_losses(tape, model, ex);
        tape.backward(scale(out.total, 1.0 / bn));
        const LossBreakdown b = breakdown_of(tape, out.terms, out.total);
        acc.sit += b.sit / bn;
        acc.dis += b.dis / bn;
        acc.neg += b.neg / bn;
        acc.box += b.box / bn;
        acc.total += b.total / bn;
      }
      ++step;
      acc.step = step;
      if (!std::isfinite(acc.total) || !std::isfinite(acc.sit) ||
          !std::isfinite(acc.dis) || !std::isfinite(acc.neg) ||
          !std::isfinite(acc.box)) {
        std::string ids;
        for (std::size_t k = start; k < end; ++k) {
          if (!ids.empty()) ids += ", ";
          ids += examples[order[k]].image->id;
        }
        throw NonFinite("step " + std::to_string(step) +
                        ": non-finite loss (batch: " + ids + ")");
      }
      opt.step();
      log.push_back(acc);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
  }
  return log;
}

// ---- run orchestration ---------------------------------------------------------

std::string RunPaths::epoch_ckpt(int epoch) const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/epoch_%03d.ckpt", epoch);
  return out_dir + buf;
}

RunPaths run_paths(const RunConfig& cfg) {
  RunPaths p;
  p.out_dir = cfg.data_out_dir.empty() ? "runs" : cfg.data_out_dir;
  p.log_csv = p.out_dir + "/train_log.csv";
  p.metrics_csv = p.out_dir + "/metrics.csv";
  p.report_txt = p.out_dir + "/report.txt";
  p.loss_svg = p.out_dir + "/loss_curve.svg";
  p.final_ckpt = p.out_dir + "/final.ckpt";
  return p;
}

TrainRunResult run_training(const RunConfig& cfg) {
  validate_config(cfg);
  const RunData data = load_run_data(cfg);
  if (data.split.train.empty()) throw EmptyDataset("training split is empty");
  const std::vector<const AnnotatedImage*> train = data.subset(data.split.train);

  const Ablations ab = ablations_of(cfg);
  const bool needs_teacher = ab.use_glimpse || ab.use_gaze;
  const EncoderConfig ecfg{cfg.model_d, cfg.model_grid, cfg.optim_seed};
  std::unique_ptr<VisionEncoder> teacher;
  if (needs_teacher)
    teacher = make_vision_encoder(cfg.model_teacher, "teacher", ecfg);
  auto student = make_vision_encoder(cfg.model_student, "student", ecfg);
  auto text = make_text_encoder(cfg.model_text, ecfg);

  const std::uint64_t teacher_sum = teacher ? teacher->param_checksum() : 0;
  const std::uint64_t student_sum = student->param_checksum();
  const std::uint64_t text_sum = text->param_checksum();

  const RationaleCache cache(cfg.data_cache);
  ExamplePrep prep =
      prepare_examples(cfg, train, teacher.get(), *student, *text, cache);

  Model<double> model = build_model(cfg, data.vocab, *text);

  const RunPaths paths = run_paths(cfg);
  std::filesystem::create_directories(paths.out_dir);
  const std::uint64_t fp = config_fingerprint(cfg);

  TrainRunResult result;
  result.fingerprint = fp;
  result.examples = static_cast<int>(prep.examples.size());
  result.skipped = prep.skipped;

  TrainHooks hooks;
  hooks.on_epoch_end = [&](int epoch, Model<double>& m) {
    const std::string path = paths.epoch_ckpt(epoch);
    save_checkpoint(snapshot_params(m.params, fp), path);
    result.checkpoints.push_back(path);
  };
  result.log = train_model(model, prep.examples, cfg, hooks);

  save_checkpoint(snapshot_params(model.params, fp), paths.final_ckpt);
  result.checkpoints.push_back(paths.final_ckpt);
  write_text_file(paths.log_csv, render_log_csv(result.log));

  if ((teacher && teacher->param_checksum() != teacher_sum) ||
      student->param_checksum() != student_sum ||
      text->param_checksum() != text_sum)
    throw Error("frozen encoder parameters changed during training");
  return result;
}

EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& subset) {
  validate_config(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const RunData data = load_run_data(cfg);

  const std::vector<std::string>* ids = nullptr;
  if (subset == "train")
    ids = &data.split.train;
  else if (subset == "dev")
    ids = &data.split.dev;
  else if (subset == "test")
    ids = &data.split.test;
  else
    throw InvalidConfig("eval subset must be train, dev, or test; got '" +
                        subset + "'");
  if (ids->empty()) throw EmptyDataset("eval subset '" + subset + "' is empty");

  const EncoderConfig ecfg{cfg.model_d, cfg.model_grid, cfg.optim_seed};
  auto student = make_vision_encoder(cfg.model_student, "student", ecfg);
  auto text = make_text_encoder(cfg.model_text, ecfg);

  Model<double> model = build_model(cfg, data.vocab, *text);
  restore_params(model.params, ck);

  std::map<std::string, SituationPrediction> preds;
  std::vector<AnnotatedImage> gold;
  gold.reserve(ids->size());
  for (const std::string& id : *ids) {
    const AnnotatedImage* img = data.by_id(id);
    if (!img) throw UnknownSymbol("split references unknown image id: " + id);
    const Tensor<double> tokens = resized_tokens<double>(
        student->encode(image_ref(cfg, id)), cfg.model_grid, cfg.model_grid);
    preds[id] = infer_image(model, tokens, data.vocab, img->width, img->height);
    gold.push_back(*img);
  }

  EvalResult result;
  result.report = evaluate(preds, gold, data.split);
  result.fingerprint = ck.fingerprint;
  result.images = static_cast<int>(gold.size());
  return result;
}

RationaleRunStats run_rationales(const RunConfig& cfg, bool force) {
  validate_config(cfg);
  const RunData data = load_run_data(cfg);
  if (data.split.train.empty()) throw EmptyDataset("training split is empty");
  const std::vector<const AnnotatedImage*> train = data.subset(data.split.train);

  RationaleCache cache(cfg.data_cache);
  const std::string bid = cache_backend_id(cfg);
  const JrgOptions jrg = jrg_of(cfg);

  auto covered = [&](const AnnotatedImage* img) {
    for (RationaleKind k : {RationaleKind::Glimpse, RationaleKind::Gaze})
      for (Polarity p : {Polarity::Positive, Polarity::Negative})
        if (!cache.get(img->id, k, p, bid)) return false;
    return true;
  };

  RationaleRunStats stats;
  std::vector<const AnnotatedImage*> work;
  for (const AnnotatedImage* img : train) {
    if (!force && covered(img))
      ++stats.cached;
    else
      work.push_back(img);
  }
  if (work.empty()) return stats;

  const int n_workers = std::max(
      1, std::min(cfg.jrg_parallel, static_cast<int>(work.size())));
  std::atomic<std::size_t> next{0};
  std::atomic<int> generated{0}, flagged{0};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&]() {
    try {
      const std::unique_ptr<RationaleBackend> backend =
          make_backend(cfg, data.vocab);
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= work.size()) break;
        const AnnotatedImage* img = work[i];
        const std::string situation =
            situation_text(img->frames[0], data.vocab);
        const auto records =
            generate_rationales(img->id, situation, *backend, jrg);
        for (const RationaleRecord& r : records) {
          cache.put(r);
          if (r.flagged) flagged.fetch_add(1);
        }
        generated.fetch_add(1);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  stats.generated = generated.load();
  stats.flagged = flagged.load();
  return stats;
}

// ---- gradient suite --------------------------------------------------------------

namespace {

struct TempPixelDir {
  std::filesystem::path dir;
  explicit TempPixelDir(std::uint64_t tag) {
    dir = std::filesystem::temp_directory_path() /
          ("ovgsr_grad_" + std::to_string(tag));
    std::filesystem::create_directories(dir);
  }
  ~TempPixelDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
  std::string write_pixels(const std::string& id, std::uint64_t seed) const {
    const std::string path = (dir / (id + ".bin")).string();
    std::ofstream out(path, std::ios::binary);
    std::uint64_t state = splitmix64(fnv1a64(id.data(), id.size()) ^ seed);
    for (int i = 0; i < 256; ++i) {
      state = splitmix64(state);
      const char byte = static_cast<char>(state & 0xff);
      out.write(&byte, 1);
    }
    return path;
  }
};

Vocabulary micro_vocab() {
  Vocabulary v;
  v.verbs = {"carrying", "jumping", "sleeping"};
  v.roles = {"agent", "item", "place", "tool"};
  v.nouns = {"", "person", "dog", "box", "grass"};
  v.verb_role_ids = {{0, 1, 2}, {0, 2}, {0, 1, 2, 3}};
  v.rebuild_index();
  return v;
}

AnnotatedImage micro_image_a() {
  AnnotatedImage img;
  img.id = "grad_a";
  img.width = 48;
  img.height = 48;
  SituationFrame f;
  f.verb = 0;
  f.roles = {{0, 1, Box{4, 4, 20, 20}}, {1, 3, Box{8, 8, 28, 30}},
             {2, 4, std::nullopt}};
  img.frames = {f, f, f};
  img.frames[1].roles[2].noun = 0;  // annotator disagreement on one noun
  return img;
}

AnnotatedImage micro_image_b() {
  AnnotatedImage img;
  img.id = "grad_b";
  img.width = 48;
  img.height = 48;
  SituationFrame f;
  f.verb = 1;
  f.roles = {{0, 2, Box{10, 12, 40, 44}}, {2, 4, std::nullopt}};
  img.frames = {f, f, f};
  return img;
}

}  // namespace

std::vector<NamedGradReport> gradient_suite(std::uint64_t seed) {
  const Vocabulary vocab = micro_vocab();
  const std::vector<AnnotatedImage> images = {micro_image_a(), micro_image_b()};

  const TempPixelDir tmp(splitmix64(seed ^ 0x67726164ULL));
  const EncoderConfig ecfg{16, 4, seed};
  auto teacher = make_vision_encoder("stub", "teacher", ecfg);
  auto student = make_vision_encoder("stub", "student", ecfg);
  auto text = make_text_encoder("stub", ecfg);

  MockBackend backend(vocab, seed);
  const JrgOptions jrg;

  std::vector<TrainExample<double>> examples;
  for (const AnnotatedImage& img : images) {
    const std::string path = tmp.write_pixels(img.id, seed);
    const ImageRef ref{img.id, path};
    const std::string situation = situation_text(img.frames[0], vocab);
    const auto records = generate_rationales(img.id, situation, backend, jrg);

    TrainExample<double> ex;
    ex.image = &img;
    ex.teacher_tokens = resized_tokens<double>(teacher->encode(ref), 4, 4);
    ex.student_tokens = resized_tokens<double>(student->encode(ref), 4, 4);
    ex.gli_pos = tensor_cast<double>(text->encode(records[0].text).tokens);
    ex.gaz_pos = tensor_cast<double>(text->encode(records[1].text).tokens);
    ex.gli_neg = tensor_cast<double>(text->encode(records[2].text).pooled);
    ex.gaz_neg = tensor_cast<double>(text->encode(records[3].text).pooled);
    examples.push_back(std::move(ex));
  }

  const ModelDims dims{16, 4, 4, 1, 2, 2};
  Model<double> model;
  model.dims = dims;
  std::mt19937_64 rng(seed + 1);
  model.params = make_model_params<double>(dims, rng);
  model.verb_embs =
      tensor_cast<double>(class_embedding_matrix(*text, vocab.verbs));
  model.noun_embs =
      tensor_cast<double>(class_embedding_matrix(*text, vocab.nouns));

  enum class Pick { Sit, Dis, Neg, Box, Total };
  struct Term {
    std::string name;
    Pick pick;
    NegSign sign;
  };
  const std::vector<Term> terms = {
      {"situation", Pick::Sit, NegSign::AsPrinted},
      {"distillation", Pick::Dis, NegSign::AsPrinted},
      {"negative (as printed)", Pick::Neg, NegSign::AsPrinted},
      {"negative (diverge)", Pick::Neg, NegSign::Diverge},
      {"box", Pick::Box, NegSign::AsPrinted},
      {"total", Pick::Total, NegSign::AsPrinted},
  };

  std::vector<NamedGradReport> reports;
  for (const Term& term : terms) {
    model.ablate.neg_sign = term.sign;
    auto run = [&](bool with_grad) -> double {
      double sum = 0;
      for (const TrainExample<double>& ex : examples) {
        Tape<double> tape;
        ForwardOutputs<double> out = build_losses(tape, model, ex);
        Var<double> sel = out.total;
        switch (term.pick) {
          case Pick::Sit: sel = *out.terms.sit; break;
          case Pick::Dis: sel = *out.terms.dis; break;
          case Pick::Neg: sel = *out.terms.neg; break;
          case Pick::Box: sel = *out.terms.box; break;
          case Pick::Total: sel = out.total; break;
        }
        const Var<double> mean = scale(sel, 0.5);
        sum += tape.val(mean).at(0);
        if (with_grad) tape.backward(mean);
      }
      return sum;
    };
    reports.push_back(
        {term.name, grad_check(run, model.params.collect(), GradCheckOptions{})});
  }
  return reports;
}

// ---- reporting ----------------------------------------------------------------

std::string render_loss_curve_svg(const std::vector<StepLog>& log) {
  const int width = 900, height = 420;
  const int ml = 64, mr = 170, mt = 24, mb = 48;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  if (log.empty()) {
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\">no training "
           "steps logged</text>\n</svg>\n";
    return svg.str();
  }

  struct Series {
    const char* name;
    const char* color;
    double StepLog::* field;
  };
  const Series series[] = {
      {"total", "#111111", &StepLog::total}, {"l_sit", "#d62728", &StepLog::sit},
      {"l_dis", "#1f77b4", &StepLog::dis},   {"l_neg", "#2ca02c", &StepLog::neg},
      {"l_box", "#9467bd", &StepLog::box},
  };

  double lo = log[0].total, hi = log[0].total;
  for (const StepLog& s : log)
    for (const Series& sr : series) {
      lo = std::min(lo, s.*(sr.field));
      hi = std::max(hi, s.*(sr.field));
    }
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const int x0 = log.front().step, x1 = log.back().step;
  auto px = [&](int step) {
    const double t = x1 == x0 ? 0.5 : double(step - x0) / double(x1 - x0);
    return ml + t * plot_w;
  };
  auto py = [&](double v) { return mt + (1.0 - (v - lo) / (hi - lo)) * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };

  // axes and ticks
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\""
      << ml + plot_w << "\" y2=\"" << mt + plot_h
      << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + plot_h << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = py(v);
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml
        << "\" y2=\"" << y << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"12\" "
           "font-family=\"sans-serif\">"
        << num(v) << "</text>\n";
  }
  for (int step : {x0, (x0 + x1) / 2, x1}) {
    const double x = px(step);
    svg << "<line x1=\"" << x << "\" y1=\"" << mt + plot_h << "\" x2=\"" << x
        << "\" y2=\"" << mt + plot_h + 4 << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << mt + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"12\" "
           "font-family=\"sans-serif\">"
        << step << "</text>\n";
  }
  svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"13\" "
         "font-family=\"sans-serif\">step</text>\n";

  int legend_y = mt + 10;
  for (const Series& sr : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << sr.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const StepLog& s : log) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(s.step), py(s.*(sr.field)));
      svg << buf;
    }
    svg << "\"/>\n";
    svg << "<line x1=\"" << ml + plot_w + 12 << "\" y1=\"" << legend_y
        << "\" x2=\"" << ml + plot_w + 34 << "\" y2=\"" << legend_y
        << "\" stroke=\"" << sr.color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << ml + plot_w + 40 << "\" y=\"" << legend_y + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << sr.name
        << "</text>\n";
    legend_y += 18;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ovgsr
