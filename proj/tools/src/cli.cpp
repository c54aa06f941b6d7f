// SPDX-License-Identifier: Apache-2.0
#include "macaw/cli.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "macaw/checkpoint.hpp"
#include "macaw/cognitive.hpp"
#include "macaw/config.hpp"
#include "macaw/dataset.hpp"
#include "macaw/encoders.hpp"
#include "macaw/tokenizer.hpp"
#include "macaw/training.hpp"

namespace macaw::cli {

namespace fs = std::filesystem;

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownCommand:
      return kUsage;
    case Errc::ConfigError:
      return kConfig;
    case Errc::InvalidUtf8:
    case Errc::UnknownKind:
    case Errc::BadMagic:
    case Errc::TruncatedFile:
    case Errc::VersionMismatch:
    case Errc::CorruptPayload:
    case Errc::MissingText:
    case Errc::EmptyDataset:
    case Errc::EmptyCaption:
    case Errc::SourceTooSmall:
    case Errc::SchemaError:
    case Errc::IoError:
      return kData;
    default:
      return kRuntime;
  }
}

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::vector<std::string> media;
  std::string instruction;
  std::size_t max_new = 64;
};

/// Config file plus --seed override. Relative data paths in the file
/// resolve against the file's directory.
RunConfig load_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_run_config(o.config);
    const fs::path base = fs::path(o.config).parent_path();
    for (auto* p : {&cfg.data.train, &cfg.data.eval, &cfg.data.captions}) {
      if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).string();
    }
  }
  if (o.seed) {
    cfg.train.seed = *o.seed;
    cfg.data.seed = *o.seed;
  }
  return cfg;
}

std::string require_path(const std::string& flag_value, const std::string& fallback, const char* what) {
  if (!flag_value.empty()) return flag_value;
  if (!fallback.empty()) return fallback;
  throw Error(Errc::ConfigError, std::string("no ") + what + " given");
}

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

std::vector<TrainingExample> load_training_set(const std::string& path, const Vocab& vocab,
                                               const ModalityConfig& modality) {
  return to_training_examples(read_examples(path), vocab, modality, parent_or_dot(path));
}

int cmd_dataset_build(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o);
  const std::string captions_path = require_path(o.data, cfg.data.captions, "captions file (--data)");
  if (o.out.empty()) throw Error(Errc::ConfigError, "--out is required");
  const char* fixtures = std::getenv("MACAW_FIXTURES");
  if (!fixtures || !*fixtures) throw Error(Errc::ConfigError, "MACAW_FIXTURES is not set");

  const auto captions = read_captions(captions_path);
  MockGenerationClient mock(fixtures);
  RetryPolicy policy;
  policy.max_retries = cfg.data.max_retries;
  policy.backoff = std::chrono::milliseconds(cfg.data.backoff_ms);
  policy.rate_limit = std::chrono::milliseconds(cfg.data.rate_limit_ms);
  RetryingClient client(mock, policy);
  GenerationOptions gen;
  gen.max_tokens = cfg.data.max_tokens;
  gen.temperature = cfg.data.temperature;
  gen.concurrency = cfg.data.concurrency;

  const fs::path out_path = fs::path(o.out) / "examples.jsonl";
  GenerationResult result;
  try {
    result = generate_examples(captions, client, gen);
  } catch (const GenerationAborted& e) {
    const fs::path partial = fs::path(o.out) / "examples.partial.jsonl";
    write_examples(partial, e.partial().examples);
    err << "macaw: " << e.partial().examples.size() << " examples from " << e.partial().completed
        << " captions saved to " << partial.string() << '\n';
    throw;
  }
  write_examples(out_path, result.examples);
  for (const auto& s : result.skipped) err << "macaw: skipped caption " << s.id << ": " << s.reason << '\n';
  out << "captions " << captions.size() << '\n'
      << "examples " << result.examples.size() << '\n'
      << "skipped " << result.skipped.size() << '\n'
      << "output " << out_path.string() << '\n';
  return kOk;
}

int cmd_dataset_stats(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const std::string path = require_path(o.data, cfg.data.train, "dataset (--data)");
  out << format_stats(stats(read_examples(path)));
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const std::string path = require_path(o.data, cfg.data.train, "training data (--data)");
  if (o.out.empty()) throw Error(Errc::ConfigError, "--out is required");

  auto examples = read_examples(path);
  if (cfg.data.mix_per_source > 0) examples = mix(group_by_source(examples), cfg.data.mix_per_source, cfg.data.seed);
  const Vocab vocab(cfg.model.vocab_size);
  const auto dataset = to_training_examples(examples, vocab, cfg.modality, parent_or_dot(path));

  const MacawModel model(cfg.model, cfg.modality);
  Checkpoint ckpt;
  FitOptions fo;
  fo.out_dir = fs::path(o.out);
  if (!o.checkpoint.empty()) fo.resume_from = fs::path(o.checkpoint);
  const auto result = fit(model, dataset, cfg, ckpt, fo);

  out << "examples " << dataset.size() << '\n' << "steps " << result.total_steps << '\n';
  if (!result.metrics.empty()) {
    out << std::setprecision(17) << "final_loss " << result.metrics.back().loss << '\n';
  }
  out << "checkpoint " << (fs::path(o.out) / "final.ckpt").string() << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(Errc::ConfigError, "--checkpoint is required");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const std::string path = require_path(o.data, load_config(o).data.eval, "evaluation data (--data)");
  const MacawModel model(ckpt.config.model, ckpt.config.modality);
  model.check_params(ckpt.params);
  const auto dataset = load_training_set(path, ckpt.vocab, ckpt.config.modality);
  const auto report = evaluate(model, ckpt.params, dataset, ckpt.config.train.max_seq_len);
  out << std::setprecision(17) << "examples " << report.examples << '\n'
      << "tokens " << report.tokens << '\n'
      << "mean_nll " << report.mean_nll << '\n'
      << "perplexity " << report.perplexity << '\n';
  return kOk;
}

/// "kind:path", or a bare path whose kind follows from its extension.
MediaEntry parse_media_flag(const std::string& arg) {
  const auto colon = arg.find(':');
  if (colon != std::string::npos) {
    try {
      return {parse_modality(arg.substr(0, colon)), arg.substr(colon + 1), 0};
    } catch (const Error&) {
      // Not a kind prefix; treat the whole argument as a path.
    }
  }
  std::string ext = fs::path(arg).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".mcwf") return {load_features(arg).kind, arg, 0};
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" || ext == ".gif" || ext == ".webp")
    return {ModalityKind::Image, arg, 0};
  if (ext == ".mp4" || ext == ".avi" || ext == ".mov" || ext == ".mkv" || ext == ".webm")
    return {ModalityKind::Video, arg, 0};
  if (ext == ".wav" || ext == ".mp3" || ext == ".flac" || ext == ".ogg") return {ModalityKind::Audio, arg, 0};
  throw Error(Errc::UnknownKind, arg + ": cannot tell the media kind; use kind:path");
}

int cmd_generate(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(Errc::ConfigError, "--checkpoint is required");
  if (o.instruction.empty()) throw Error(Errc::MissingText, "--instruction is required");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const MacawModel model(ckpt.config.model, ckpt.config.modality);
  model.check_params(ckpt.params);

  InstructionExample ex;
  ex.id = "generate";
  ex.instruction = o.instruction;
  ex.response = "-";
  for (const auto& m : o.media) ex.media.push_back(parse_media_flag(m));
  const auto input = to_training_example(ex, ckpt.vocab, ckpt.config.modality).input;

  const auto ids = model.generate_greedy(ckpt.params, input, o.max_new);
  // Byte-level output straight to the stream; an undertrained model can
  // emit byte sequences that are not valid UTF-8.
  std::string text;
  for (auto id : ids) {
    if (id >= Vocab::kByteOffset && id < Vocab::kByteVocab) text.push_back(static_cast<char>(id - Vocab::kByteOffset));
  }
  out << text << '\n';
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal instruction tuning toolkit", "macaw"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)");
    sub->add_option("--seed", o.seed, "Seed for every random choice; overrides the config");
  };
  auto* build = app.add_subcommand("dataset-build", "Generate instruction examples from captions");
  add_common(build);
  build->add_option("--data", o.data, "Captions JSONL");
  build->add_option("--out", o.out, "Output directory");

  auto* st = app.add_subcommand("dataset-stats", "Per-source item counts and average lengths");
  add_common(st);
  st->add_option("--data", o.data, "Examples JSONL");

  auto* train = app.add_subcommand("train", "Fine-tune on an examples file");
  add_common(train);
  train->add_option("--data", o.data, "Training examples JSONL");
  train->add_option("--out", o.out, "Run directory for checkpoints and metrics");
  train->add_option("--checkpoint", o.checkpoint, "Resume from this epoch checkpoint");

  auto* ev = app.add_subcommand("eval", "Response NLL and perplexity of a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  ev->add_option("--data", o.data, "Evaluation examples JSONL");

  auto* gen = app.add_subcommand("generate", "Greedy response for media plus an instruction");
  add_common(gen);
  gen->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  gen->add_option("--media", o.media, "Media file, optionally prefixed with image:, video: or audio:");
  gen->add_option("--instruction", o.instruction, "Instruction text");
  gen->add_option("--max-new", o.max_new, "Maximum number of generated tokens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && app.get_subcommands().empty() && std::string(argv[1]).rfind("-", 0) != 0) {
      err << "macaw: error: unknown command \"" << argv[1] << "\"\n";
    } else {
      err << "macaw: error: " << e.what() << '\n';
    }
    return kUsage;
  }

  try {
    if (build->parsed()) return cmd_dataset_build(o, out, err);
    if (st->parsed()) return cmd_dataset_stats(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (gen->parsed()) return cmd_generate(o, out);
    throw Error(Errc::UnknownCommand, "no command given");
  } catch (const Error& e) {
    err << "macaw: error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "macaw: error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace macaw::cli
