#include "ovgsr/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "ovgsr/config.hpp"
#include "ovgsr/errors.hpp"
#include "ovgsr/eval.hpp"
#include "ovgsr/trainer.hpp"

namespace ovgsr {
namespace {

// Problems a user fixes by changing inputs exit 1; failures of the run
// itself exit 2.
int exit_code_for(const Error& e) {
  if (dynamic_cast<const InvalidConfig*>(&e) ||
      dynamic_cast<const CheckpointError*>(&e) ||
      dynamic_cast<const MalformedAnnotation*>(&e) ||
      dynamic_cast<const UnknownSymbol*>(&e) ||
      dynamic_cast<const EmptyDataset*>(&e) ||
      dynamic_cast<const InsufficientVerbs*>(&e) ||
      dynamic_cast<const MissingRationale*>(&e) ||
      dynamic_cast<const MissingPrediction*>(&e) ||
      dynamic_cast<const CacheCorrupt*>(&e) ||
      dynamic_cast<const DegenerateBox*>(&e) ||
      dynamic_cast<const EmptyText*>(&e))
    return 1;
  return 2;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// Per-subcommand holder of --config plus one flag per config key.
struct ConfigFlags {
  struct Entry {
    std::string key;
    std::string value;
    CLI::Option* opt = nullptr;
  };
  std::string config_path;
  std::vector<Entry> entries;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "config file with [data] [model] [prompt] [jrg] [optim] "
                    "[loss] sections");
    RunConfig probe;
    for (const ConfigField& f : config_fields(probe))
      entries.push_back({f.key, "", nullptr});
    for (Entry& e : entries)
      e.opt = sub->add_option("--" + e.key, e.value,
                              "override config key " + e.key);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const Entry& e : entries)
      if (e.opt->count() > 0) apply_override(cfg, e.key, e.value);
    return cfg;
  }
};

void write_file_or_throw(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << text;
  if (!out) throw Error("short write on file: " + path);
}

std::string read_file_or_throw(const std::string& path,
                               const std::string& hint) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("missing " + path + "; " + hint);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string eval_report_text(const EvalResult& res) {
  std::string text = render_metrics_table(res.report);
  text += "\nimages evaluated: " + std::to_string(res.images) + "\n";
  text += "config fingerprint: " + hex64(res.fingerprint) + "\n";
  return text;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"open-vocabulary grounded situation recognition toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // -- split ---------------------------------------------------------------
  auto* split_cmd =
      app.add_subcommand("split", "generate a seeded open-vocabulary split");
  auto split_flags = std::make_shared<ConfigFlags>();
  split_flags->attach(split_cmd);
  auto split_args = std::make_shared<std::map<std::string, std::string>>();
  auto split_seed = std::make_shared<std::uint64_t>(0);
  auto split_opt = std::make_shared<SplitOptions>();
  auto* seed_opt = split_cmd->add_option("--seed", *split_seed, "split seed");
  auto* data_opt = split_cmd->add_option("--data", (*split_args)["data"],
                                         "annotations file");
  split_cmd->add_option("--vocab", (*split_args)["vocab"], "vocabulary file");
  split_cmd->add_option("--out", (*split_args)["out"], "output split file");
  split_cmd->add_option("--k-unseen", split_opt->k_unseen,
                        "unseen verbs to sample");
  split_cmd->add_option("--k-rare", split_opt->k_rare, "rare verbs to mark");
  split_cmd->add_option("--unseen-cap", split_opt->unseen_cap,
                        "max unseen images kept per side");
  split_cmd->add_option("--train-frac", split_opt->train_frac,
                        "train fraction");
  split_cmd->add_option("--dev-frac", split_opt->dev_frac, "dev fraction");
  split_cmd->callback([split_flags, split_args, split_seed, split_opt,
                       seed_opt, data_opt]() {
    RunConfig cfg = split_flags->resolve();
    if (data_opt->count() > 0) cfg.data_annotations = (*split_args)["data"];
    if (!(*split_args)["vocab"].empty())
      cfg.data_vocab = (*split_args)["vocab"];
    if (cfg.data_annotations.empty())
      throw InvalidConfig("split needs --data or data.annotations");
    if (cfg.data_vocab.empty())
      cfg.data_vocab = (std::filesystem::path(cfg.data_annotations)
                            .parent_path() /
                        "vocab.json")
                           .string();
    const std::uint64_t seed =
        seed_opt->count() > 0 ? *split_seed : cfg.optim_seed;
    std::string out = (*split_args)["out"];
    if (out.empty())
      out = cfg.data_split.empty()
                ? (std::filesystem::path(cfg.data_annotations).parent_path() /
                   "split.json")
                      .string()
                : cfg.data_split;

    const Vocabulary vocab = load_vocabulary(cfg.data_vocab);
    const std::vector<AnnotatedImage> images =
        load_annotations(cfg.data_annotations, vocab);
    const SplitSpec split = make_split(images, vocab, seed, *split_opt);
    save_split(split, out);
    std::cout << "split: " << split.train.size() << " train, "
              << split.dev.size() << " dev, " << split.test.size()
              << " test; " << split.unseen_verbs.size() << " unseen verbs, "
              << split.rare_verbs.size() << " rare verbs -> " << out << "\n";
  });

  // -- rationales ------------------------------------------------------------
  auto* rat_cmd = app.add_subcommand(
      "rationales", "generate judged rationales for the training split");
  auto rat_flags = std::make_shared<ConfigFlags>();
  rat_flags->attach(rat_cmd);
  auto rat_backend = std::make_shared<std::string>();
  auto rat_parallel = std::make_shared<int>(0);
  auto rat_force = std::make_shared<bool>(false);
  auto* rb_opt =
      rat_cmd->add_option("--backend", *rat_backend, "mock or http");
  auto* rp_opt =
      rat_cmd->add_option("--parallel", *rat_parallel, "worker count");
  rat_cmd->add_flag("--force", *rat_force, "regenerate cached records");
  rat_cmd->callback([rat_flags, rat_backend, rat_parallel, rat_force, rb_opt,
                     rp_opt]() {
    RunConfig cfg = rat_flags->resolve();
    if (rb_opt->count() > 0)
      apply_override(cfg, "jrg.backend", *rat_backend);
    if (rp_opt->count() > 0)
      apply_override(cfg, "jrg.parallel", std::to_string(*rat_parallel));
    const RationaleRunStats stats = run_rationales(cfg, *rat_force);
    std::cout << "rationales: " << stats.generated << " images generated, "
              << stats.cached << " already cached, " << stats.flagged
              << " flagged records -> " << cfg.data_cache << "\n";
  });

  // -- train -----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train the student model");
  auto train_flags = std::make_shared<ConfigFlags>();
  train_flags->attach(train_cmd);
  train_cmd->callback([train_flags]() {
    const RunConfig cfg = train_flags->resolve();
    const TrainRunResult res = run_training(cfg);
    const RunPaths paths = run_paths(cfg);
    std::cout << "train: " << res.examples << " examples (" << res.skipped
              << " skipped), " << res.log.size() << " steps\n";
    if (!res.log.empty())
      std::cout << "  total loss " << res.log.front().total << " -> "
                << res.log.back().total << "\n";
    std::cout << "  log: " << paths.log_csv << "\n"
              << "  checkpoint: " << paths.final_ckpt << "\n"
              << "  config fingerprint: " << hex64(res.fingerprint) << "\n";
  });

  // -- eval ------------------------------------------------------------------
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a split subset");
  auto eval_flags = std::make_shared<ConfigFlags>();
  eval_flags->attach(eval_cmd);
  auto eval_ckpt = std::make_shared<std::string>();
  auto eval_subset = std::make_shared<std::string>("test");
  eval_cmd->add_option("--checkpoint", *eval_ckpt,
                       "checkpoint file (default: <out_dir>/final.ckpt)");
  eval_cmd->add_option("--subset", *eval_subset, "train, dev, or test");
  eval_cmd->callback([eval_flags, eval_ckpt, eval_subset]() {
    const RunConfig cfg = eval_flags->resolve();
    const RunPaths paths = run_paths(cfg);
    const std::string ckpt =
        eval_ckpt->empty() ? paths.final_ckpt : *eval_ckpt;
    const EvalResult res = run_eval(cfg, ckpt, *eval_subset);
    std::filesystem::create_directories(paths.out_dir);
    write_file_or_throw(paths.metrics_csv, render_metrics_csv(res.report));
    const std::string text = eval_report_text(res);
    write_file_or_throw(paths.report_txt, text);
    std::cout << text << "metrics: " << paths.metrics_csv << "\n";
  });

  // -- report -----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand(
      "report", "render the loss curves and the stored metric table");
  auto report_flags = std::make_shared<ConfigFlags>();
  report_flags->attach(report_cmd);
  report_cmd->callback([report_flags]() {
    const RunConfig cfg = report_flags->resolve();
    const RunPaths paths = run_paths(cfg);
    const std::string csv =
        read_file_or_throw(paths.log_csv, "run train first");
    const std::vector<StepLog> log = parse_log_csv(csv);
    write_file_or_throw(paths.loss_svg, render_loss_curve_svg(log));
    std::cout << "loss curves (" << log.size() << " steps) -> "
              << paths.loss_svg << "\n";
    std::ifstream report(paths.report_txt);
    if (report) {
      std::ostringstream buf;
      buf << report.rdbuf();
      std::cout << buf.str();
    } else {
      std::cout << "no evaluation report at " << paths.report_txt
                << "; run eval to produce metrics\n";
    }
  });

  // -- gradcheck ---------------------------------------------------------------
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every loss term");
  auto grad_flags = std::make_shared<ConfigFlags>();
  grad_flags->attach(grad_cmd);
  grad_cmd->callback([grad_flags, &rc]() {
    const RunConfig cfg = grad_flags->resolve();
    bool all_pass = true;
    for (const NamedGradReport& r : gradient_suite(cfg.optim_seed)) {
      std::printf("%-24s max rel err %.3e over %lld coords [%s]\n",
                  r.term.c_str(), r.report.max_rel_err,
                  static_cast<long long>(r.report.coords_checked),
                  r.report.pass ? "PASS" : "FAIL");
      all_pass = all_pass && r.report.pass;
    }
    if (!all_pass) rc = 2;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ovgsr");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ovgsr
