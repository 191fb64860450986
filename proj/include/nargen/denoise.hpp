#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nargen/adam.hpp"
#include "nargen/batch.hpp"
#include "nargen/model.hpp"
#include "nargen/ops.hpp"

namespace nargen {

// The corruption function q(.|x): per example draw a rate t (Uniform(0,1)
// unless fixed), then independently replace each target-buffer position with
// a uniformly random vocabulary id with probability t. Prefix positions are
// never touched.
struct CorruptionSpec {
  std::optional<double> fixed_rate;  // nullopt: t ~ Uniform(0,1) per example
};

inline SequenceBatch corrupt(const SequenceBatch& clean, const CorruptionSpec& spec,
                             std::int32_t vocab, std::uint64_t seed) {
  if (vocab < 2) throw ContractError("corrupt: vocab must be >= 2");
  SequenceBatch out = clean;
  for (std::int64_t r = 0; r < out.rows; ++r) {
    double rate;
    if (spec.fixed_rate) {
      rate = *spec.fixed_rate;
      if (rate < 0.0 || rate > 1.0) throw ContractError("corrupt: rate must be in [0,1]");
    } else {
      Rng rate_rng(stream_seed(seed, tag::corrupt_rate, static_cast<std::uint64_t>(r)));
      rate = rate_rng.uniform();
    }
    const std::int64_t p = out.prefix_len[static_cast<std::size_t>(r)];
    for (std::int64_t c = p; c < p + out.target_len; ++c) {
      Rng rng(stream_seed(seed, tag::corrupt_pos, static_cast<std::uint64_t>(r),
                          static_cast<std::uint64_t>(c)));
      if (rng.uniform() < rate) {
        out.id(r, c) = static_cast<std::int32_t>(rng.uniform_int(vocab));
      }
    }
  }
  return out;
}

// Two-step unrolled-denoising loss. loss_step0 denoises corrupted data,
// loss_step1 denoises the model's own (detached) samples; the objective is
// their mean. Deeper unrolls keep averaging.
struct UnrollLossReport {
  double loss_step0 = 0.0;
  double loss_step1 = 0.0;
  double total = 0.0;
  double token_acc0 = 0.0;
  double token_acc1 = 0.0;
  bool empty_mask_warning = false;
};

namespace detail {

template <typename Scalar>
double masked_accuracy(const Tensor<Scalar>& logits_flat, const SequenceBatch& clean) {
  const Index v = logits_flat.dim(logits_flat.rank() - 1);
  std::int64_t hit = 0, total = 0;
  for (std::int64_t r = 0; r < clean.rows; ++r) {
    for (std::int64_t c = 0; c < clean.seq_len; ++c) {
      if (!clean.mask(r, c)) continue;
      const Index row = r * clean.seq_len + c;
      if (argmax_row(logits_flat.raw() + row * v, v) == clean.id(r, c)) ++hit;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// Replaces target-buffer positions of `from` with temperature-1 categorical
// samples from `logits`. One uniform draw per masked position, keyed by
// (seed, unroll level, row, col); tests replay this stream.
template <typename Scalar>
SequenceBatch sample_unroll_step(const SequenceBatch& from, const Tensor<Scalar>& logits_flat,
                                 int level, std::uint64_t seed) {
  const Index v = logits_flat.dim(logits_flat.rank() - 1);
  SequenceBatch next = from;
  for (std::int64_t r = 0; r < from.rows; ++r) {
    const std::int64_t p = from.prefix_len[static_cast<std::size_t>(r)];
    for (std::int64_t c = p; c < p + from.target_len; ++c) {
      Rng rng(stream_seed(seed, tag::unroll_sample, static_cast<std::uint64_t>(level),
                          static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c)));
      const Index row = r * from.seq_len + c;
      next.id(r, c) = sample_categorical(logits_flat.raw() + row * v, v, 1.0, rng);
    }
  }
  return next;
}

}  // namespace detail

// Loss evaluation against any denoiser (a function from a batch to logits
// [B*S, V] or [B, S, V]); used by fixtures and oracle checks where the
// denoiser is not a transformer.
template <typename Scalar>
using DenoiserFn = std::function<Tensor<Scalar>(const SequenceBatch&)>;

template <typename Scalar>
UnrollLossReport sundae_loss_report(const DenoiserFn<Scalar>& denoiser, const SequenceBatch& clean,
                                    const CorruptionSpec& spec, std::int32_t vocab,
                                    std::uint64_t seed, int unroll_steps = 2) {
  if (unroll_steps < 1) throw ContractError("sundae_loss: unroll_steps must be >= 1");
  UnrollLossReport report;
  SequenceBatch x = corrupt(clean, spec, vocab, seed);
  double loss_sum = 0.0;
  for (int u = 0; u < unroll_steps; ++u) {
    Tensor<Scalar> logits = denoiser(x);
    CrossEntropyInfo info = cross_entropy_value(logits, std::span<const std::int32_t>(clean.ids),
                                                std::span<const std::uint8_t>(clean.loss_mask));
    const double acc = detail::masked_accuracy(logits, clean);
    if (u == 0) {
      report.loss_step0 = info.value;
      report.token_acc0 = acc;
    } else if (u == 1) {
      report.loss_step1 = info.value;
      report.token_acc1 = acc;
    }
    report.empty_mask_warning |= info.empty_mask;
    loss_sum += info.value;
    if (u + 1 < unroll_steps) x = detail::sample_unroll_step(x, logits, u, seed);
  }
  report.total = loss_sum / unroll_steps;
  return report;
}

template <typename Scalar>
struct SundaeResult {
  Var loss = -1;  // scalar objective on the tape
  UnrollLossReport report;
};

// Training-path objective on the tape. The per-step categorical sampling
// reads detached logit values, so no gradient flows through the sampled ids;
// both forwards share the same parameter leaves and their gradients add.
template <typename Scalar>
SundaeResult<Scalar> sundae_loss(Tape<Scalar>& tape, const ParamVars& pv, const ModelConfig& cfg,
                                 const SequenceBatch& clean, const CorruptionSpec& spec,
                                 std::uint64_t seed, int unroll_steps = 2,
                                 const DropoutPlan* drop = nullptr) {
  if (unroll_steps < 1) throw ContractError("sundae_loss: unroll_steps must be >= 1");
  SundaeResult<Scalar> result;
  SequenceBatch x = corrupt(clean, spec, cfg.vocab, seed);
  std::vector<Var> losses;
  double loss_sum = 0.0;
  for (int u = 0; u < unroll_steps; ++u) {
    Var logits = forward_on_tape(tape, pv, cfg, x, AttentionMode::bidirectional, drop);
    CrossEntropyInfo info;
    Var loss_u = cross_entropy(tape, logits, clean.ids, clean.loss_mask, &info);
    const double acc = detail::masked_accuracy(tape.value(logits), clean);
    if (u == 0) {
      result.report.loss_step0 = info.value;
      result.report.token_acc0 = acc;
    } else if (u == 1) {
      result.report.loss_step1 = info.value;
      result.report.token_acc1 = acc;
    }
    result.report.empty_mask_warning |= info.empty_mask;
    loss_sum += info.value;
    losses.push_back(loss_u);
    if (u + 1 < unroll_steps) x = detail::sample_unroll_step(x, tape.value(logits), u, seed);
  }
  Var total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(tape, total, losses[i]);
  result.loss = scale(tape, total, static_cast<Scalar>(1.0 / unroll_steps));
  result.report.total = loss_sum / unroll_steps;
  return result;
}

// Model parameters plus optimizer state; everything a training run owns.
struct TrainState {
  ModelConfig config;
  ModelParams<float> params;
  AdamState<float> adam;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

inline TrainState make_train_state(const ModelConfig& cfg, std::uint64_t seed, double lr) {
  TrainState state;
  state.config = cfg;
  state.params = init_params<float>(cfg, seed);
  state.adam = make_adam_state<float>(state.params.tensor_list(), lr);
  state.seed = seed;
  return state;
}

// One optimization step: loss, backward, Adam. Deterministic in
// (state, batch, seed); aborts with NumericalError on a non-finite loss.
inline UnrollLossReport train_step(TrainState& state, const SequenceBatch& clean,
                                   const CorruptionSpec& spec, std::uint64_t seed,
                                   int unroll_steps = 2) {
  Tape<float> tape;
  ParamVars pv = push_params(tape, state.params);
  DropoutPlan drop{state.config.dropout, stream_seed(seed, tag::dropout)};
  SundaeResult<float> result =
      sundae_loss(tape, pv, state.config, clean, spec, seed, unroll_steps,
                  state.config.dropout > 0.0 ? &drop : nullptr);
  if (!std::isfinite(result.report.total)) {
    throw NumericalError("train_step: non-finite loss at step " + std::to_string(state.step));
  }
  tape.backward(result.loss);
  std::vector<const Tensor<float>*> grads;
  grads.reserve(pv.vars.size());
  for (Var v : pv.vars) {
    tape.grad(v).require_finite("parameter gradient");
    grads.push_back(&tape.grad(v));
  }
  adam_step(state.adam, state.params.tensor_list(), grads);
  state.step += 1;
  return result.report;
}

}  // namespace nargen
