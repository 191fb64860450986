#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nargen/model.hpp"
#include "nargen/vocab.hpp"

namespace nargen {

// Exact distribution over all V^n target buffers. States are indexed in
// lexicographic id order: index = sum over positions of id * V^(n-1-pos),
// most significant position first; empirical counts align by the same index.
struct SequenceDistribution {
  std::int32_t vocab = 0;
  std::int32_t length = 0;
  std::vector<double> probs;  // size V^n

  std::int64_t states() const { return static_cast<std::int64_t>(probs.size()); }

  static std::int64_t index_of(std::span<const std::int32_t> ids, std::int32_t vocab) {
    std::int64_t idx = 0;
    for (std::int32_t id : ids) idx = idx * vocab + id;
    return idx;
  }

  static std::vector<std::int32_t> ids_of(std::int64_t index, std::int32_t vocab,
                                          std::int32_t length) {
    std::vector<std::int32_t> ids(static_cast<std::size_t>(length));
    for (std::int32_t pos = length - 1; pos >= 0; --pos) {
      ids[static_cast<std::size_t>(pos)] = static_cast<std::int32_t>(index % vocab);
      index /= vocab;
    }
    return ids;
  }
};

inline constexpr std::int64_t kOracleStateCap = 1'000'000;

// Any per-position denoiser works here, not just the transformer: given a
// target buffer it returns an n x V row-stochastic matrix of per-position
// categorical probabilities. Hand-crafted transition tables plug straight in.
using Denoiser = std::function<Tensor<double>(std::span<const std::int32_t> buffer)>;

namespace detail {

inline std::int64_t checked_state_count(std::int32_t vocab, std::int32_t length) {
  if (vocab < 2 || length < 1) throw ContractError("chain oracle: need vocab >= 2, length >= 1");
  std::int64_t total = 1;
  for (std::int32_t i = 0; i < length; ++i) {
    total *= vocab;
    if (total > kOracleStateCap) {
      throw ContractError("chain oracle: V^n exceeds the enforced cap of 1e6 states");
    }
  }
  return total;
}

}  // namespace detail

// Exact law of the unrolled sampling chain after T steps, starting from the
// point mass on the all-MASK buffer. Each transition maps a state to the
// product measure of the denoiser's per-position categoricals.
inline SequenceDistribution exact_unroll_distribution(const Denoiser& denoiser, std::int32_t vocab,
                                                      std::int32_t length, int steps) {
  const std::int64_t total = detail::checked_state_count(vocab, length);
  if (steps < 0) throw ContractError("chain oracle: steps must be >= 0");

  SequenceDistribution dist;
  dist.vocab = vocab;
  dist.length = length;
  dist.probs.assign(static_cast<std::size_t>(total), 0.0);
  std::vector<std::int32_t> all_mask(static_cast<std::size_t>(length), Vocab::kMask);
  dist.probs[static_cast<std::size_t>(SequenceDistribution::index_of(all_mask, vocab))] = 1.0;

  std::vector<double> next(static_cast<std::size_t>(total));
  for (int t = 0; t < steps; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::int64_t s = 0; s < total; ++s) {
      const double mass = dist.probs[static_cast<std::size_t>(s)];
      if (mass == 0.0) continue;
      const std::vector<std::int32_t> ids = SequenceDistribution::ids_of(s, vocab, length);
      const Tensor<double> probs = denoiser(ids);
      if (probs.rank() != 2 || probs.dim(0) != length || probs.dim(1) != vocab) {
        throw DimensionError("chain oracle: denoiser must return [length, vocab] probabilities");
      }
      // Spread mass over all successors: the transition law from s is the
      // product measure of the per-position categoricals. Zero branches prune.
      const std::function<void(std::int32_t, std::int64_t, double)> spread =
          [&](std::int32_t pos, std::int64_t idx, double acc) {
            if (acc == 0.0) return;
            if (pos == length) {
              next[static_cast<std::size_t>(idx)] += acc;
              return;
            }
            for (std::int32_t id = 0; id < vocab; ++id) {
              spread(pos + 1, idx * vocab + id, acc * probs[pos * vocab + id]);
            }
          };
      spread(0, 0, mass);
    }
    dist.probs.swap(next);
  }
  return dist;
}

// Total variation between an exact distribution and empirical counts over the
// same lexicographic index space: half the L1 distance.
inline double tv_distance(const SequenceDistribution& p, std::span<const std::int64_t> counts) {
  if (static_cast<std::int64_t>(counts.size()) != p.states()) {
    throw DimensionError("tv_distance: count vector must match the state space");
  }
  std::int64_t n = 0;
  for (std::int64_t c : counts) n += c;
  if (n <= 0) throw ContractError("tv_distance: no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    acc += std::abs(p.probs[i] - static_cast<double>(counts[i]) / static_cast<double>(n));
  }
  return 0.5 * acc;
}

// Deterministic skeleton of the chain: per-position argmax applied T times
// from all-MASK. The sampler's argmax trajectory must equal this exactly.
inline std::vector<std::vector<std::int32_t>> argmax_trajectory(const Denoiser& denoiser,
                                                                std::int32_t vocab,
                                                                std::int32_t length, int steps) {
  detail::checked_state_count(vocab, length);
  std::vector<std::vector<std::int32_t>> traj;
  std::vector<std::int32_t> state(static_cast<std::size_t>(length), Vocab::kMask);
  traj.push_back(state);
  for (int t = 0; t < steps; ++t) {
    const Tensor<double> probs = denoiser(state);
    for (std::int32_t pos = 0; pos < length; ++pos) {
      state[static_cast<std::size_t>(pos)] = argmax_row(probs.raw() + pos * vocab, vocab);
    }
    traj.push_back(state);
  }
  return traj;
}

// Adapts a transformer to the oracle's denoiser interface: runs a forward on
// [prefix || buffer] and softmaxes the target-position logits.
template <typename Scalar>
Denoiser transformer_denoiser(const ModelParams<Scalar>& params, const ModelConfig& cfg,
                              std::vector<std::int32_t> prefix, std::int32_t target_len) {
  return [params, cfg, prefix = std::move(prefix), target_len](
             std::span<const std::int32_t> buffer) -> Tensor<double> {
    if (static_cast<std::int32_t>(buffer.size()) != target_len) {
      throw DimensionError("transformer_denoiser: buffer length mismatch");
    }
    const std::int64_t p = static_cast<std::int64_t>(prefix.size());
    SequenceBatch batch(1, p + target_len, target_len);
    batch.set_row_window(0, static_cast<std::int32_t>(p));
    for (std::int64_t c = 0; c < p; ++c) batch.id(0, c) = prefix[static_cast<std::size_t>(c)];
    for (std::int32_t c = 0; c < target_len; ++c) batch.id(0, p + c) = buffer[static_cast<std::size_t>(c)];
    const Tensor<Scalar> logits = forward(params, cfg, batch, AttentionMode::bidirectional);
    Tensor<double> out(Shape{target_len, cfg.vocab});
    for (std::int32_t c = 0; c < target_len; ++c) {
      const Scalar* row = logits.raw() + (p + c) * cfg.vocab;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int32_t j = 0; j < cfg.vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double total = 0.0;
      for (std::int32_t j = 0; j < cfg.vocab; ++j) {
        const double e = std::exp(static_cast<double>(row[j]) - mx);
        out[c * cfg.vocab + j] = e;
        total += e;
      }
      for (std::int32_t j = 0; j < cfg.vocab; ++j) out[c * cfg.vocab + j] /= total;
    }
    return out;
  };
}

}  // namespace nargen
