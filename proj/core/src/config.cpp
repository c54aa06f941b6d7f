// SPDX-License-Identifier: Apache-2.0
#include "macaw/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>
#include <utility>

#include <nlohmann/json.hpp>

#include "macaw/error.hpp"

namespace macaw {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view modality_name(ModalityKind kind) noexcept {
  switch (kind) {
    case ModalityKind::Image: return "image";
    case ModalityKind::Video: return "video";
    case ModalityKind::Audio: return "audio";
  }
  return "unknown";
}

ModalityKind parse_modality(std::string_view name) {
  if (name == "image") return ModalityKind::Image;
  if (name == "video") return ModalityKind::Video;
  if (name == "audio") return ModalityKind::Audio;
  throw Error(Errc::UnknownKind, "modality '" + std::string(name) + "'");
}

const ModalitySpec& ModalityConfig::spec(ModalityKind kind) const {
  switch (kind) {
    case ModalityKind::Image: return image;
    case ModalityKind::Video: return video;
    case ModalityKind::Audio: return audio;
  }
  throw Error(Errc::UnknownKind, "modality");
}

ModalitySpec& ModalityConfig::spec(ModalityKind kind) {
  return const_cast<ModalitySpec&>(std::as_const(*this).spec(kind));
}

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields are read through the size_t path");

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(Errc::ConfigError, path + ": " + what);
}

/// Binds JSON keys of one object to typed setters and rejects anything else.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  Section& field(const char* key, T& out) {
    known_.emplace(key, true);
    auto it = node_.find(key);
    if (it == node_.end()) return *this;
    read(*it, key_path(key), out);
    return *this;
  }

  Section& nested(const char* key, const std::function<void(const json&, const std::string&)>& fn) {
    known_.emplace(key, true);
    auto it = node_.find(key);
    if (it != node_.end()) fn(*it, key_path(key));
    return *this;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!known_.contains(it.key())) config_error(key_path(it.key()), "unknown key");
    }
  }

 private:
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static void read(const json& v, const std::string& path, std::size_t& out) {
    if (!v.is_number_unsigned()) config_error(path, "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) config_error(path, "expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) config_error(path, "expected a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) config_error(path, "expected a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, const std::string& path, LossReduction& out) {
    if (!v.is_string()) config_error(path, "expected \"mean\" or \"sum\"");
    const auto s = v.get<std::string>();
    if (s == "mean") {
      out = LossReduction::Mean;
    } else if (s == "sum") {
      out = LossReduction::Sum;
    } else {
      config_error(path, "expected \"mean\" or \"sum\", got \"" + s + "\"");
    }
  }

  const json& node_;
  std::string path_;
  std::map<std::string, bool, std::less<>> known_;
};

void read_modality(const json& node, const std::string& path, ModalitySpec& spec, bool video) {
  Section s(node, path);
  s.field(video ? "frames" : "length", spec.length).field("dim", spec.dim).field("out_length", spec.out_length);
  s.finish();
}

ordered_json modality_json(const ModalitySpec& spec, bool video) {
  ordered_json j;
  j[video ? "frames" : "length"] = spec.length;
  j["dim"] = spec.dim;
  j["out_length"] = spec.out_length;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](const char* path, double v) {
    if (!(v > 0)) config_error(path, "must be positive");
  };
  positive("model.d_model", static_cast<double>(model.d_model));
  positive("model.layers", static_cast<double>(model.layers));
  positive("model.heads", static_cast<double>(model.heads));
  positive("model.ffn_width", static_cast<double>(model.ffn_width));
  positive("model.max_seq_len", static_cast<double>(model.max_seq_len));
  positive("model.alignment_heads", static_cast<double>(model.alignment_heads));
  positive("model.init_std", model.init_std);
  if (model.d_model % model.heads != 0) config_error("model.heads", "must divide model.d_model");
  if (model.d_model % model.alignment_heads != 0) config_error("model.alignment_heads", "must divide model.d_model");
  if (model.vocab_size < 260) config_error("model.vocab_size", "must be at least 260 (byte vocabulary)");

  positive("train.learning_rate", train.lr_peak);
  if (!(train.warmup_ratio > 0.0 && train.warmup_ratio < 1.0)) config_error("train.warmup_ratio", "must lie in (0, 1)");
  positive("train.micro_batch", static_cast<double>(train.micro_batch));
  positive("train.grad_accum", static_cast<double>(train.grad_accum));
  positive("train.max_seq_len", static_cast<double>(train.max_seq_len));
  if (train.max_seq_len > model.max_seq_len) config_error("train.max_seq_len", "exceeds model.max_seq_len");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0)) config_error("train.beta1", "must lie in [0, 1)");
  if (!(train.beta2 >= 0.0 && train.beta2 < 1.0)) config_error("train.beta2", "must lie in [0, 1)");
  positive("train.eps", train.eps);
  if (train.weight_decay < 0.0) config_error("train.weight_decay", "must be non-negative");
  if (train.max_grad_norm < 0.0) config_error("train.max_grad_norm", "must be non-negative");

  if (data.concurrency == 0) config_error("data.concurrency", "must be positive");

  for (auto kind : kModalityOrder) {
    const auto& s = modality.spec(kind);
    const std::string base = "modality." + std::string(modality_name(kind));
    const std::string len_key = base + (kind == ModalityKind::Video ? ".frames" : ".length");
    positive(len_key.c_str(), static_cast<double>(s.length));
    positive((base + ".dim").c_str(), static_cast<double>(s.dim));
    positive((base + ".out_length").c_str(), static_cast<double>(s.out_length));
    if (s.out_length > s.length) config_error(base + ".out_length", "must not exceed the input length");
  }
  positive("modality.video_source_frames", static_cast<double>(modality.video_source_frames));
}

RunConfig parse_run_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigError, std::string("<root>: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");
  top.nested("model", [&](const json& n, const std::string& p) {
    auto& m = cfg.model;
    Section s(n, p);
    s.field("d_model", m.d_model)
        .field("layers", m.layers)
        .field("heads", m.heads)
        .field("ffn_width", m.ffn_width)
        .field("vocab_size", m.vocab_size)
        .field("max_seq_len", m.max_seq_len)
        .field("alignment_heads", m.alignment_heads)
        .field("freeze_alignment_embeddings", m.freeze_alignment_embeddings)
        .field("tie_output", m.tie_output)
        .field("init_std", m.init_std);
    s.finish();
  });
  top.nested("train", [&](const json& n, const std::string& p) {
    auto& t = cfg.train;
    Section s(n, p);
    s.field("learning_rate", t.lr_peak)
        .field("warmup_ratio", t.warmup_ratio)
        .field("epochs", t.epochs)
        .field("micro_batch", t.micro_batch)
        .field("grad_accum", t.grad_accum)
        .field("max_seq_len", t.max_seq_len)
        .field("seed", t.seed)
        .field("beta1", t.beta1)
        .field("beta2", t.beta2)
        .field("eps", t.eps)
        .field("weight_decay", t.weight_decay)
        .field("loss_reduction", t.loss_reduction)
        .field("max_grad_norm", t.max_grad_norm)
        .field("save_every", t.save_every);
    s.finish();
  });
  top.nested("data", [&](const json& n, const std::string& p) {
    auto& d = cfg.data;
    Section s(n, p);
    s.field("train", d.train)
        .field("eval", d.eval)
        .field("captions", d.captions)
        .field("mix_per_source", d.mix_per_source)
        .field("seed", d.seed)
        .field("concurrency", d.concurrency)
        .field("max_retries", d.max_retries)
        .field("backoff_ms", d.backoff_ms)
        .field("rate_limit_ms", d.rate_limit_ms)
        .field("max_tokens", d.max_tokens)
        .field("temperature", d.temperature);
    s.finish();
  });
  top.nested("modality", [&](const json& n, const std::string& p) {
    auto& m = cfg.modality;
    Section s(n, p);
    s.nested("image", [&](const json& x, const std::string& q) { read_modality(x, q, m.image, false); })
        .nested("video", [&](const json& x, const std::string& q) { read_modality(x, q, m.video, true); })
        .nested("audio", [&](const json& x, const std::string& q) { read_modality(x, q, m.audio, false); })
        .field("video_source_frames", m.video_source_frames);
    s.finish();
  });
  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg) {
  ordered_json j;
  const auto& m = cfg.model;
  j["model"] = {{"d_model", m.d_model},
                {"layers", m.layers},
                {"heads", m.heads},
                {"ffn_width", m.ffn_width},
                {"vocab_size", m.vocab_size},
                {"max_seq_len", m.max_seq_len},
                {"alignment_heads", m.alignment_heads},
                {"freeze_alignment_embeddings", m.freeze_alignment_embeddings},
                {"tie_output", m.tie_output},
                {"init_std", m.init_std}};
  const auto& t = cfg.train;
  j["train"] = {{"learning_rate", t.lr_peak},
                {"warmup_ratio", t.warmup_ratio},
                {"epochs", t.epochs},
                {"micro_batch", t.micro_batch},
                {"grad_accum", t.grad_accum},
                {"max_seq_len", t.max_seq_len},
                {"seed", t.seed},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"eps", t.eps},
                {"weight_decay", t.weight_decay},
                {"loss_reduction", t.loss_reduction == LossReduction::Mean ? "mean" : "sum"},
                {"max_grad_norm", t.max_grad_norm},
                {"save_every", t.save_every}};
  const auto& d = cfg.data;
  j["data"] = {{"train", d.train},
               {"eval", d.eval},
               {"captions", d.captions},
               {"mix_per_source", d.mix_per_source},
               {"seed", d.seed},
               {"concurrency", d.concurrency},
               {"max_retries", d.max_retries},
               {"backoff_ms", d.backoff_ms},
               {"rate_limit_ms", d.rate_limit_ms},
               {"max_tokens", d.max_tokens},
               {"temperature", d.temperature}};
  j["modality"] = {{"image", modality_json(cfg.modality.image, false)},
                   {"video", modality_json(cfg.modality.video, true)},
                   {"audio", modality_json(cfg.modality.audio, false)},
                   {"video_source_frames", cfg.modality.video_source_frames}};
  return j.dump(2);
}

}  // namespace macaw
