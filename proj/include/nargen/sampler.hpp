#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nargen/batch.hpp"
#include "nargen/model.hpp"
#include "nargen/ops.hpp"
#include "nargen/vocab.hpp"

namespace nargen {

// Buffer update rule during unrolled decoding.
struct DecodeMode {
  bool sample = false;    // false: per-position argmax
  double temperature = 1.0;

  static DecodeMode argmax() { return DecodeMode{}; }
  static DecodeMode sampled(double temp) { return DecodeMode{true, temp}; }
};

struct DecodeTrace {
  // snapshots[0] is the initial buffer (all MASK for unrolled decoding);
  // snapshots[t] is the buffer after step t. All snapshots share one shape.
  std::vector<std::vector<std::int32_t>> snapshots;
  int forward_pass_count = 0;
  std::optional<int> converged_at_step;  // first t with x_{t+1} == x_t
  std::string final_text;                // filled when a vocab is supplied
  double wall_ms = 0.0;
};

// Drops PAD and MASK, then decodes what remains.
inline std::string strip_special(std::span<const std::int32_t> ids, const Vocab& vocab) {
  std::vector<std::int32_t> kept;
  kept.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id == Vocab::kPad || id == Vocab::kMask) continue;
    kept.push_back(id);
  }
  return vocab.decode(kept);
}

// Parallel unrolled decoding for a batch of prefixes sharing target_len.
// Row r starts from [prefix_r || MASK x target_len]; each step runs one
// bidirectional forward over the whole batch and rewrites every target
// position. Prefix positions are never modified. Sampling streams are keyed
// per row by seeds[r], so a batch decode equals the per-row decodes.
template <typename Scalar>
std::vector<DecodeTrace> unroll_decode_batch(const ModelParams<Scalar>& params,
                                             const ModelConfig& cfg,
                                             std::span<const std::vector<std::int32_t>> prefixes,
                                             int target_len, int steps, DecodeMode mode,
                                             bool early_stop, std::span<const std::uint64_t> seeds,
                                             const Vocab* vocab = nullptr) {
  if (target_len < 1) throw ContractError("unroll_decode: target_len must be >= 1");
  if (steps < 1) throw ContractError("unroll_decode: steps must be >= 1");
  if (mode.sample && seeds.size() != prefixes.size()) {
    throw ContractError("unroll_decode: one seed per row required in sample mode");
  }
  std::int64_t max_prefix = 0;
  for (const auto& p : prefixes) max_prefix = std::max<std::int64_t>(max_prefix, static_cast<std::int64_t>(p.size()));
  const std::int64_t rows = static_cast<std::int64_t>(prefixes.size());
  const std::int64_t seq_len = max_prefix + target_len;
  if (seq_len > cfg.max_seq) {
    throw DimensionError("unroll_decode: prefix plus target_len exceeds model max_seq");
  }

  SequenceBatch batch(rows, seq_len, target_len);
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto& prefix = prefixes[static_cast<std::size_t>(r)];
    batch.set_row_window(r, static_cast<std::int32_t>(prefix.size()));
    for (std::size_t c = 0; c < prefix.size(); ++c) batch.id(r, static_cast<std::int64_t>(c)) = prefix[c];
    for (int c = 0; c < target_len; ++c) {
      batch.id(r, static_cast<std::int64_t>(prefix.size()) + c) = Vocab::kMask;
    }
    // no trailing positions: each row ends exactly at its buffer, the rest
    // (for shorter prefixes) is PAD outside the window
  }

  std::vector<DecodeTrace> traces(static_cast<std::size_t>(rows));
  std::vector<bool> active(static_cast<std::size_t>(rows), true);
  auto snapshot_row = [&](std::int64_t r) {
    const std::int32_t p = batch.prefix_len[static_cast<std::size_t>(r)];
    std::vector<std::int32_t> snap(static_cast<std::size_t>(target_len));
    for (int c = 0; c < target_len; ++c) snap[static_cast<std::size_t>(c)] = batch.id(r, p + c);
    return snap;
  };
  for (std::int64_t r = 0; r < rows; ++r) {
    traces[static_cast<std::size_t>(r)].snapshots.push_back(snapshot_row(r));
  }

  for (int t = 1; t <= steps; ++t) {
    bool any_active = false;
    for (bool a : active) any_active |= a;
    if (!any_active) break;

    const Tensor<Scalar> logits = forward(params, cfg, batch, AttentionMode::bidirectional);
    const Index v = cfg.vocab;
    for (std::int64_t r = 0; r < rows; ++r) {
      if (!active[static_cast<std::size_t>(r)]) continue;
      DecodeTrace& trace = traces[static_cast<std::size_t>(r)];
      const std::int32_t p = batch.prefix_len[static_cast<std::size_t>(r)];
      bool changed = false;
      for (int c = 0; c < target_len; ++c) {
        const Index row = r * seq_len + p + c;
        const Scalar* logit_row = logits.raw() + row * v;
        std::int32_t next_id;
        if (mode.sample) {
          Rng rng(stream_seed(seeds[static_cast<std::size_t>(r)], tag::decode,
                              static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(c)));
          next_id = sample_categorical(logit_row, v, mode.temperature, rng);
        } else {
          next_id = argmax_row(logit_row, v);
        }
        if (next_id != batch.id(r, p + c)) changed = true;
        batch.id(r, p + c) = next_id;
      }
      trace.forward_pass_count += 1;
      trace.snapshots.push_back(snapshot_row(r));
      if (!changed && !trace.converged_at_step) trace.converged_at_step = t - 1;
      if (!changed && early_stop) active[static_cast<std::size_t>(r)] = false;
    }
  }

  if (vocab) {
    for (auto& trace : traces) {
      trace.final_text = strip_special(trace.snapshots.back(), *vocab);
    }
  }
  return traces;
}

// Single-prefix convenience wrapper; T defaults to the paper's 10 unroll
// steps at the CLI layer.
template <typename Scalar>
DecodeTrace unroll_decode(const ModelParams<Scalar>& params, const ModelConfig& cfg,
                          std::span<const std::int32_t> prefix, int target_len, int steps,
                          DecodeMode mode, bool early_stop, std::uint64_t seed = 0,
                          const Vocab* vocab = nullptr) {
  std::vector<std::vector<std::int32_t>> prefixes{
      std::vector<std::int32_t>(prefix.begin(), prefix.end())};
  std::vector<std::uint64_t> seeds{seed};
  return unroll_decode_batch(params, cfg, prefixes, target_len, steps, mode, early_stop, seeds,
                             vocab)[0];
}

// Sequential baseline: greedy left-to-right decoding, one forward pass per
// emitted token. The next token is read at a MASK placed one past the
// committed sequence, so the same denoising family serves as the AR model.
// Halts at PAD (when stop_at_pad) or maximum length; the forward-pass count
// equals the emitted token count.
template <typename Scalar>
DecodeTrace ar_decode(const ModelParams<Scalar>& params, const ModelConfig& cfg,
                      std::span<const std::int32_t> prefix, int max_len, bool stop_at_pad = true,
                      const Vocab* vocab = nullptr) {
  if (cfg.attention != AttentionMode::causal) {
    throw ContractError("ar_decode: requires a causal-mode model config");
  }
  if (max_len < 1) throw ContractError("ar_decode: max_len must be >= 1");
  const std::int64_t p = static_cast<std::int64_t>(prefix.size());
  if (p + max_len > cfg.max_seq) {
    throw DimensionError("ar_decode: prefix plus max_len exceeds model max_seq");
  }

  DecodeTrace trace;
  std::vector<std::int32_t> emitted;
  auto snapshot = [&]() {
    std::vector<std::int32_t> snap(static_cast<std::size_t>(max_len), Vocab::kPad);
    for (std::size_t i = 0; i < emitted.size(); ++i) snap[i] = emitted[i];
    trace.snapshots.push_back(std::move(snap));
  };
  snapshot();

  for (int k = 0; k < max_len; ++k) {
    const std::int64_t seq_len = p + k + 1;
    SequenceBatch batch(1, seq_len, /*target_len=*/1);
    batch.set_row_window(0, static_cast<std::int32_t>(seq_len - 1));
    for (std::int64_t c = 0; c < p; ++c) batch.id(0, c) = prefix[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) batch.id(0, p + c) = emitted[static_cast<std::size_t>(c)];
    batch.id(0, seq_len - 1) = Vocab::kMask;

    const Tensor<Scalar> logits = forward(params, cfg, batch, AttentionMode::causal);
    trace.forward_pass_count += 1;
    const std::int32_t next_id = argmax_row(logits.raw() + (seq_len - 1) * cfg.vocab,
                                            static_cast<Index>(cfg.vocab));
    emitted.push_back(next_id);
    snapshot();
    if (stop_at_pad && next_id == Vocab::kPad) break;
  }
  if (vocab) trace.final_text = strip_special(emitted, *vocab);
  return trace;
}

}  // namespace nargen
