#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nargen/common.hpp"

namespace nargen {

// Fixed-shape batch of [prefix || target-buffer || PAD] token rows. The loss
// mask is 1 exactly on the target-buffer window [prefix_len, prefix_len +
// target_len) of each row; everything past the window is PAD with mask 0.
struct SequenceBatch {
  std::int64_t rows = 0;
  std::int64_t seq_len = 0;
  std::int32_t target_len = 0;
  std::vector<std::int32_t> ids;         // rows * seq_len, row-major
  std::vector<std::int32_t> prefix_len;  // per row
  std::vector<std::uint8_t> loss_mask;   // rows * seq_len

  SequenceBatch() = default;
  SequenceBatch(std::int64_t rows_, std::int64_t seq_len_, std::int32_t target_len_)
      : rows(rows_),
        seq_len(seq_len_),
        target_len(target_len_),
        ids(static_cast<std::size_t>(rows_ * seq_len_), 0),
        prefix_len(static_cast<std::size_t>(rows_), 0),
        loss_mask(static_cast<std::size_t>(rows_ * seq_len_), 0) {}

  std::int32_t& id(std::int64_t r, std::int64_t c) {
    return ids[static_cast<std::size_t>(r * seq_len + c)];
  }
  std::int32_t id(std::int64_t r, std::int64_t c) const {
    return ids[static_cast<std::size_t>(r * seq_len + c)];
  }
  std::uint8_t& mask(std::int64_t r, std::int64_t c) {
    return loss_mask[static_cast<std::size_t>(r * seq_len + c)];
  }
  std::uint8_t mask(std::int64_t r, std::int64_t c) const {
    return loss_mask[static_cast<std::size_t>(r * seq_len + c)];
  }

  std::span<const std::int32_t> row_ids(std::int64_t r) const {
    return {ids.data() + r * seq_len, static_cast<std::size_t>(seq_len)};
  }

  // Marks row r as [prefix of length p || target buffer], setting the mask
  // pattern the invariants require. Tokens are written by the caller.
  void set_row_window(std::int64_t r, std::int32_t p) {
    prefix_len[static_cast<std::size_t>(r)] = p;
    for (std::int64_t c = 0; c < seq_len; ++c) {
      mask(r, c) = (c >= p && c < p + target_len) ? 1 : 0;
    }
  }

  // Checks the structural invariants; `vocab` of 0 skips the id range check.
  void validate(std::int32_t vocab = 0, std::int32_t pad_id = 0) const;
};

// Row-wise concatenation; all inputs must share seq_len and target_len.
SequenceBatch stack(std::span<const SequenceBatch> parts);

// Packed binary batch file: magic "NARB", little-endian throughout.
void write_narb(const std::string& path, const SequenceBatch& batch, std::int32_t vocab);
SequenceBatch read_narb(const std::string& path, std::int32_t* vocab_out = nullptr);

}  // namespace nargen
