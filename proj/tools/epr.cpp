// SPDX-License-Identifier: Apache-2.0
//
// epr: command-line front end for the emotion profile refinery.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "epr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct RunOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> store;
  std::optional<int> folds;
  std::optional<int> generations;
  std::optional<std::string> mode;
};

epr::ExperimentConfig resolve_config(const RunOverrides& o) {
  epr::ExperimentConfig cfg = o.config.empty() ? epr::ExperimentConfig{} : epr::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.output) cfg.output_dir = *o.output;
  if (o.store) cfg.feature_store = *o.store;
  if (o.folds) cfg.refinery_folds = *o.folds;
  if (o.generations) cfg.generations = *o.generations;
  if (o.mode) cfg.mode = epr::parse_mode(*o.mode);
  return cfg;
}

void add_run_overrides(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("-c,--config", o.config, "Experiment configuration (JSON)");
  cmd->add_option("--seed", o.seed, "Override the master seed");
  cmd->add_option("-o,--output", o.output, "Override the output directory");
  cmd->add_option("--store", o.store, "Override the feature store directory");
  cmd->add_option("--folds", o.folds, "Override the refinery fold count");
  cmd->add_option("--generations", o.generations, "Override the number of generations");
  cmd->add_option("--mode", o.mode, "Override the refinery mode (none, sEPR, pEPR, hard-dynamic, soft-static)");
}

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    epr::write_text_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion profile refinery: segment-level speech emotion classification with iterative soft labels"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  bool verbose = false, quiet = false, describe = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");
  app.add_flag("--describe", describe, "Print the resolved configuration and exit");

  RunOverrides top;
  add_run_overrides(&app, top);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus as a feature store");
  std::string spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("-s,--spec", spec_path, "Corpus spec (JSON); defaults apply when omitted");
  gen->add_option("-o,--output", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Override the spec seed");

  auto* feat = app.add_subcommand("featurize", "Compute log-Mel features for a WAV manifest");
  std::string manifest_path, feat_out, feat_config;
  feat->add_option("-m,--manifest", manifest_path, "manifest.csv (utterance_id,path,label,speaker)")->required();
  feat->add_option("-o,--output", feat_out, "Feature store directory")->required();
  feat->add_option("-c,--config", feat_config, "Experiment configuration supplying the features section");

  auto* manifest = app.add_subcommand("manifest", "Build a manifest from a corpus directory's file names");
  std::string convention, corpus_root, manifest_out;
  manifest->add_option("--convention", convention, "casia, emodb or savee")->required();
  manifest->add_option("-d,--dir", corpus_root, "Corpus root directory")->required();
  manifest->add_option("-o,--output", manifest_out, "Directory for manifest.csv and classes.txt")->required();

  auto* run = app.add_subcommand("run", "Run the refinery and utterance decision on a feature store");
  RunOverrides run_o;
  bool fresh = false, no_models = false;
  add_run_overrides(run, run_o);
  run->add_flag("--fresh", fresh, "Discard completed generations instead of resuming");
  run->add_flag("--no-models", no_models, "Do not keep fold-out model checkpoints");

  auto* eval = app.add_subcommand("eval", "Re-score a stored generation of a run");
  std::string eval_run, eval_out;
  int eval_gen = 0;
  eval->add_option("-r,--run", eval_run, "Run directory")->required();
  eval->add_option("-g,--generation", eval_gen, "Generation (default: last)");
  eval->add_option("-o,--output", eval_out, "Write the report here instead of stdout");

  auto* exp = app.add_subcommand("export-ep", "Export one utterance's emotion profiles across generations");
  std::string exp_run, exp_utt, exp_out;
  exp->add_option("-r,--run", exp_run, "Run directory")->required();
  exp->add_option("-u,--utterance", exp_utt, "Utterance id")->required();
  exp->add_option("-o,--output", exp_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  epr::set_log_level(quiet ? epr::LogLevel::kSilent : verbose ? epr::LogLevel::kInfo : epr::LogLevel::kWarning);

  try {
    if (describe) {
      const RunOverrides& o = *run ? run_o : top;
      epr::ExperimentConfig cfg = resolve_config(o);
      cfg.validate();
      std::cout << epr::config_to_json(cfg);
      return kOk;
    }
    if (*gen) {
      epr::SyntheticCorpusSpec spec =
          spec_path.empty() ? epr::SyntheticCorpusSpec{} : epr::corpus_spec_from_json(epr::read_text(spec_path));
      if (gen_seed) spec.seed = *gen_seed;
      const auto corpus = epr::generate_synthetic_corpus(spec);
      epr::write_corpus(corpus, gen_out);
      std::cout << "wrote " << corpus.utterances.size() << " utterances (" << corpus.class_names.size()
                << " classes) to " << gen_out << "\n";
    } else if (*feat) {
      epr::ExperimentConfig cfg = feat_config.empty() ? epr::ExperimentConfig{} : epr::load_config(feat_config);
      const auto report = epr::featurize(epr::read_manifest(manifest_path), cfg.frames, cfg.segment, feat_out);
      std::cout << "featurized " << report.succeeded << " utterances, " << report.failures.size() << " failed\n";
      for (const auto& [id, msg] : report.failures) std::cerr << "  " << id << ": " << msg << "\n";
      if (!report.failures.empty()) return kData;
    } else if (*manifest) {
      const auto m = epr::build_manifest(epr::parse_convention(convention), corpus_root);
      epr::CorpusManifest out = m;
      for (auto& e : out.entries) e.path = (fs::absolute(corpus_root) / e.path).lexically_normal().string();
      epr::write_manifest(out, manifest_out);
      std::cout << "wrote " << out.entries.size() << " entries to " << manifest_out << "\n";
    } else if (*run) {
      epr::ExperimentConfig cfg = resolve_config(run_o);
      epr::RunOptions opts;
      opts.resume = !fresh;
      opts.save_models = !no_models;
      const auto report = epr::run_experiment(cfg, opts);
      for (const auto& g : report.generations)
        std::printf("generation %d: WA %.4f  UA %.4f  mean EP entropy %.4f%s\n", g.t, g.wa, g.ua, g.mean_ep_entropy,
                    g.resumed ? "  (resumed)" : "");
      std::cout << "results in " << cfg.output_dir << "\n";
    } else if (*eval) {
      const auto g = epr::evaluate_run(eval_run, eval_gen);
      nlohmann::ordered_json j;
      j["generation"] = g.t;
      j["wa"] = g.wa;
      j["ua"] = g.ua;
      j["mean_ep_entropy"] = g.mean_ep_entropy;
      j["confusion_matrix"] = g.confusion.rows();
      write_or_print(j.dump(2) + "\n", eval_out);
    } else if (*exp) {
      write_or_print(epr::export_ep_evolution(exp_run, exp_utt), exp_out);
    } else {
      std::cout << app.help();
    }
  } catch (const epr::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const epr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const epr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOk;
}
