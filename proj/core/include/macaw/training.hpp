// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "macaw/cognitive.hpp"
#include "macaw/config.hpp"

namespace macaw {

struct TrainingExample {
  MultiModalInput input;
  /// Framed response ids (text followed by EOS).
  TokenIds response;
};

/// Mean (or sum) over response positions of -log softmax(logits[pos-1])[id at pos].
/// Positions outside the response span contribute nothing.
ag::Var response_nll(ag::Var logits, const InstructionSequence& seq, LossReduction reduction = LossReduction::Mean);

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg);
/// Linear warmup from 0 to lr_peak, then cosine decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam state, one moment pair per parameter.
struct OptimizerState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  bool operator==(const OptimizerState&) const = default;
};

OptimizerState init_optimizer(const ParamStore& params);
void adamw_update(ParamStore& params, const Gradients& grads, OptimizerState& state, double lr,
                  const TrainConfig& cfg);

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

std::string to_json_line(const StepMetrics& m);

/// Loss of one example and its gradient, for callers that drive the
/// optimizer themselves (gradient checks, evaluation).
double example_loss(const MacawModel& model, const ParamStore& params, const TrainingExample& example,
                    LossReduction reduction, std::size_t max_seq_len, Gradients* grads = nullptr);

/// Example-mean gradient over the batch, accumulated micro-batch by
/// micro-batch. Returns the example-mean loss.
double batch_gradient(const MacawModel& model, const ParamStore& params, std::span<const TrainingExample> batch,
                      const TrainConfig& cfg, Gradients& grads);

/// One optimizer update. The batch is split into consecutive micro-batches
/// of cfg.micro_batch examples (at most cfg.grad_accum of them); the update
/// uses the example-mean gradient across all of them.
StepMetrics train_step(const MacawModel& model, std::span<const TrainingExample> batch, ParamStore& params,
                       OptimizerState& opt, const TrainConfig& cfg, std::size_t total_steps);

std::size_t steps_per_epoch(std::size_t examples, const TrainConfig& cfg);
std::size_t total_steps(std::size_t examples, const TrainConfig& cfg);

struct Checkpoint;

struct FitOptions {
  /// When set, receives final.ckpt, metrics.jsonl and epoch-N.ckpt every
  /// train.save_every epochs.
  std::optional<std::filesystem::path> out_dir;
  /// Continue from an epoch-boundary checkpoint instead of fresh weights.
  std::optional<std::filesystem::path> resume_from;
};

struct FitResult {
  std::vector<StepMetrics> metrics;
  std::size_t total_steps = 0;
};

/// Runs epochs * ceil(N / (micro_batch * grad_accum)) updates, reshuffling
/// the examples with the seeded generator at the start of every epoch.
/// Throws EmptyDataset when `dataset` is empty.
FitResult fit(const MacawModel& model, const std::vector<TrainingExample>& dataset, const RunConfig& cfg,
              Checkpoint& ckpt, const FitOptions& options = {});

/// Fresh checkpoint: initialised parameters, zero optimizer state, step 0.
Checkpoint initial_checkpoint(const MacawModel& model, const RunConfig& cfg);

struct EvalReport {
  double mean_nll = 0.0;
  double perplexity = 0.0;
  std::size_t examples = 0;
  std::size_t tokens = 0;
};

/// Token-mean response NLL over the whole dataset.
EvalReport evaluate(const MacawModel& model, const ParamStore& params, const std::vector<TrainingExample>& dataset,
                    std::size_t max_seq_len);

}  // namespace macaw
