// SPDX-License-Identifier: Apache-2.0
#include "macaw/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "macaw/checkpoint.hpp"
#include "macaw/error.hpp"
#include "macaw/rng.hpp"

namespace macaw {

ag::Var response_nll(ag::Var logits, const InstructionSequence& seq, LossReduction reduction) {
  const Span* resp = seq.find(SpanKind::Response);
  if (!resp || resp->size() == 0) throw Error(Errc::NoResponseSpan, "sequence has no response to score");
  if (resp->begin == 0) throw Error(Errc::NoResponseSpan, "response cannot start at position 0");
  const std::size_t s = seq.length();
  if (logits.rows() != s) {
    throw Error(Errc::ShapeMismatch, "logits have " + std::to_string(logits.rows()) + " rows for a sequence of " +
                                         std::to_string(s));
  }
  // Row p predicts the token at p + 1.
  std::vector<std::size_t> targets(s, 0);
  std::vector<double> weights(s, 0.0);
  const double w = reduction == LossReduction::Mean ? 1.0 / static_cast<double>(resp->size()) : 1.0;
  for (std::size_t pos = resp->begin; pos < resp->end; ++pos) {
    targets[pos - 1] = seq.token_ids[pos];
    weights[pos - 1] = w;
  }
  return ag::weighted_nll(logits, targets, weights);
}

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const std::size_t warmup = warmup_steps(total_steps, cfg);
  if (step < warmup) return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps <= warmup) return cfg.lr_peak;
  const double progress =
      static_cast<double>(std::min(step, total_steps) - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState init_optimizer(const ParamStore& params) {
  return OptimizerState{zero_gradients(params), zero_gradients(params), 0};
}

void adamw_update(ParamStore& params, const Gradients& grads, OptimizerState& state, double lr,
                  const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].data();
    auto g = grads[p].data();
    auto m = state.m[p].data();
    auto v = state.v[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]);
    }
  }
}

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["lr"] = m.lr;
  j["grad_norm"] = m.grad_norm;
  return j.dump();
}

namespace {

void check_length(const MacawModel& model, const TrainingExample& ex, std::size_t max_seq_len) {
  std::size_t len = ex.input.instruction.size() + ex.response.size();
  for (auto kind : kModalityOrder)
    if (ex.input.features(kind)) len += model.modality().spec(kind).out_length;
  if (len > max_seq_len) {
    throw Error(Errc::SequenceTooLong, "example of " + std::to_string(len) + " positions exceeds max_seq_len " +
                                           std::to_string(max_seq_len));
  }
}

void add_scaled(Gradients& acc, const Gradients& g, double s) {
  for (std::size_t p = 0; p < acc.size(); ++p) {
    auto a = acc[p].data();
    auto b = g[p].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
  }
}

}  // namespace

double example_loss(const MacawModel& model, const ParamStore& params, const TrainingExample& example,
                    LossReduction reduction, std::size_t max_seq_len, Gradients* grads) {
  check_length(model, example, max_seq_len);
  ag::Tape tape;
  auto seq = model.build_sequence(tape, params, example.input, example.response);
  auto loss = response_nll(model.forward(tape, params, seq), seq, reduction);
  if (grads) *grads = tape.backward(loss, params);
  return loss.value().item();
}

double batch_gradient(const MacawModel& model, const ParamStore& params, std::span<const TrainingExample> batch,
                      const TrainConfig& cfg, Gradients& grads) {
  if (batch.empty()) throw Error(Errc::EmptyDataset, "empty batch");
  const std::size_t micro = cfg.micro_batch;
  const std::size_t n_micro = (batch.size() + micro - 1) / micro;
  if (n_micro > cfg.grad_accum) {
    throw Error(Errc::BadLength, "batch of " + std::to_string(batch.size()) + " exceeds micro_batch * grad_accum = " +
                                     std::to_string(micro * cfg.grad_accum));
  }
  grads = zero_gradients(params);
  const double total = static_cast<double>(batch.size());
  double loss_sum = 0.0;
  for (std::size_t mb = 0; mb < n_micro; ++mb) {
    const auto part = batch.subspan(mb * micro, std::min(micro, batch.size() - mb * micro));
    ag::Tape tape;
    std::vector<ag::Var> losses;
    losses.reserve(part.size());
    for (const auto& ex : part) {
      check_length(model, ex, cfg.max_seq_len);
      auto seq = model.build_sequence(tape, params, ex.input, ex.response);
      losses.push_back(response_nll(model.forward(tape, params, seq), seq, cfg.loss_reduction));
    }
    ag::Var mb_loss = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) mb_loss = ag::add(mb_loss, losses[i]);
    mb_loss = ag::scale(mb_loss, 1.0 / static_cast<double>(part.size()));
    // Micro-batch mean weighted by its share of the batch gives the
    // example mean over the whole batch.
    const double share = static_cast<double>(part.size()) / total;
    add_scaled(grads, tape.backward(mb_loss, params), share);
    loss_sum += mb_loss.value().item() * share;
  }
  return loss_sum;
}

StepMetrics train_step(const MacawModel& model, std::span<const TrainingExample> batch, ParamStore& params,
                       OptimizerState& opt, const TrainConfig& cfg, std::size_t total_steps) {
  Gradients grads;
  StepMetrics metrics;
  metrics.step = opt.step;
  metrics.loss = batch_gradient(model, params, batch, cfg, grads);
  metrics.grad_norm = global_norm(grads);
  metrics.lr = lr_at(opt.step, total_steps, cfg);
  if (cfg.max_grad_norm > 0.0 && metrics.grad_norm > cfg.max_grad_norm) {
    const double s = cfg.max_grad_norm / metrics.grad_norm;
    for (auto& g : grads) g *= s;
  }
  adamw_update(params, grads, opt, metrics.lr, cfg);
  return metrics;
}

std::size_t steps_per_epoch(std::size_t examples, const TrainConfig& cfg) {
  const std::size_t per_step = cfg.micro_batch * cfg.grad_accum;
  return (examples + per_step - 1) / per_step;
}

std::size_t total_steps(std::size_t examples, const TrainConfig& cfg) {
  return cfg.epochs * steps_per_epoch(examples, cfg);
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546464c45ULL;

}  // namespace

Checkpoint initial_checkpoint(const MacawModel& model, const RunConfig& cfg) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.config.data = DataConfig{};
  ckpt.vocab = Vocab(cfg.model.vocab_size);
  ckpt.params = model.init_params(cfg.train.seed);
  ckpt.optimizer = init_optimizer(ckpt.params);
  ckpt.step = 0;
  ckpt.rng_state = Rng(mix64(cfg.train.seed ^ kShuffleStream)).state();
  return ckpt;
}

FitResult fit(const MacawModel& model, const std::vector<TrainingExample>& dataset, const RunConfig& cfg,
              Checkpoint& ckpt, const FitOptions& options) {
  if (dataset.empty()) throw Error(Errc::EmptyDataset, "no training examples");
  const TrainConfig& tc = cfg.train;
  const std::size_t spe = steps_per_epoch(dataset.size(), tc);
  FitResult result;
  result.total_steps = tc.epochs * spe;

  if (options.resume_from) {
    ckpt = load_checkpoint(options.resume_from->string());
    ckpt.config.data = cfg.data;
  } else if (ckpt.params.size() == 0) {
    ckpt = initial_checkpoint(model, cfg);
  }
  model.check_params(ckpt.params);
  if (ckpt.step % spe != 0) {
    throw Error(Errc::BadLength, "checkpoint at step " + std::to_string(ckpt.step) +
                                     " is not on an epoch boundary (" + std::to_string(spe) + " steps per epoch)");
  }
  Rng rng;
  rng.restore(ckpt.rng_state);

  std::ofstream metrics_log;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto mode = ckpt.step == 0 ? std::ios::trunc : std::ios::app;
    metrics_log.open(*options.out_dir / "metrics.jsonl", std::ios::out | mode);
    if (!metrics_log) throw Error(Errc::IoError, (*options.out_dir / "metrics.jsonl").string() + ": cannot open");
  }

  const std::size_t per_step = tc.micro_batch * tc.grad_accum;
  std::vector<std::size_t> order(dataset.size());
  std::vector<TrainingExample> batch;
  for (std::size_t epoch = ckpt.step / spe; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t s = 0; s < spe; ++s) {
      batch.clear();
      for (std::size_t i = s * per_step; i < std::min((s + 1) * per_step, order.size()); ++i) {
        batch.push_back(dataset[order[i]]);
      }
      auto m = train_step(model, batch, ckpt.params, ckpt.optimizer, tc, result.total_steps);
      result.metrics.push_back(m);
      if (metrics_log.is_open()) metrics_log << to_json_line(m) << '\n';
    }
    ckpt.step = ckpt.optimizer.step;
    ckpt.rng_state = rng.state();
    if (options.out_dir && tc.save_every > 0 && (epoch + 1) % tc.save_every == 0) {
      metrics_log.flush();
      save_checkpoint((*options.out_dir / ("epoch-" + std::to_string(epoch + 1) + ".ckpt")).string(), ckpt);
    }
  }
  if (options.out_dir) save_checkpoint((*options.out_dir / "final.ckpt").string(), ckpt);
  return result;
}

EvalReport evaluate(const MacawModel& model, const ParamStore& params, const std::vector<TrainingExample>& dataset,
                    std::size_t max_seq_len) {
  if (dataset.empty()) throw Error(Errc::EmptyDataset, "no evaluation examples");
  EvalReport r;
  double total = 0.0;
  for (const auto& ex : dataset) {
    total += example_loss(model, params, ex, LossReduction::Sum, max_seq_len);
    r.tokens += ex.response.size();
    ++r.examples;
  }
  r.mean_nll = total / static_cast<double>(r.tokens);
  r.perplexity = std::exp(r.mean_nll);
  return r;
}

}  // namespace macaw
