#include "nargen/batch.hpp"

#include <cstring>
#include <fstream>

#include "nargen/io_util.hpp"

namespace nargen {

void SequenceBatch::validate(std::int32_t vocab, std::int32_t pad_id) const {
  if (rows < 0 || seq_len <= 0 || target_len <= 0) {
    throw DimensionError("SequenceBatch: non-positive dimensions");
  }
  if (ids.size() != static_cast<std::size_t>(rows * seq_len) || ids.size() != loss_mask.size() ||
      prefix_len.size() != static_cast<std::size_t>(rows)) {
    throw DimensionError("SequenceBatch: field sizes disagree with rows x seq_len");
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int32_t p = prefix_len[static_cast<std::size_t>(r)];
    if (p < 0 || p + target_len > seq_len) {
      throw DimensionError("SequenceBatch: row " + std::to_string(r) +
                           " window [" + std::to_string(p) + ", " + std::to_string(p + target_len) +
                           ") exceeds seq_len " + std::to_string(seq_len));
    }
    for (std::int64_t c = 0; c < seq_len; ++c) {
      const bool in_window = c >= p && c < p + target_len;
      if (!in_window && mask(r, c) != 0) {
        throw DimensionError("SequenceBatch: loss mask outside the target buffer");
      }
      if (c >= p + target_len && id(r, c) != pad_id) {
        throw DimensionError("SequenceBatch: positions past the target buffer must be PAD");
      }
      if (vocab > 0 && (id(r, c) < 0 || id(r, c) >= vocab)) {
        throw DimensionError("SequenceBatch: token id out of range");
      }
    }
  }
}

SequenceBatch stack(std::span<const SequenceBatch> parts) {
  if (parts.empty()) throw ContractError("stack: no batches given");
  SequenceBatch out(0, parts[0].seq_len, parts[0].target_len);
  for (const SequenceBatch& b : parts) {
    if (b.seq_len != out.seq_len || b.target_len != out.target_len) {
      throw DimensionError("stack: batches disagree on seq_len/target_len");
    }
    out.rows += b.rows;
    out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
    out.prefix_len.insert(out.prefix_len.end(), b.prefix_len.begin(), b.prefix_len.end());
    out.loss_mask.insert(out.loss_mask.end(), b.loss_mask.begin(), b.loss_mask.end());
  }
  return out;
}

namespace {
constexpr char kMagic[4] = {'N', 'A', 'R', 'B'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_narb(const std::string& path, const SequenceBatch& batch, std::int32_t vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_narb: cannot open " + path);
  out.write(kMagic, 4);
  io::write_u32(out, kVersion);
  io::write_u32(out, static_cast<std::uint32_t>(batch.rows));
  io::write_u32(out, static_cast<std::uint32_t>(batch.seq_len));
  io::write_u32(out, static_cast<std::uint32_t>(batch.target_len));
  io::write_u32(out, static_cast<std::uint32_t>(vocab));
  for (std::int32_t p : batch.prefix_len) io::write_i32(out, p);
  for (std::int32_t v : batch.ids) io::write_i32(out, v);
  out.write(reinterpret_cast<const char*>(batch.loss_mask.data()),
            static_cast<std::streamsize>(batch.loss_mask.size()));
  if (!out) throw DataError("write_narb: write failed for " + path);
}

SequenceBatch read_narb(const std::string& path, std::int32_t* vocab_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_narb: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("read_narb: bad magic in " + path);
  }
  if (io::read_u32(in) != kVersion) throw DataError("read_narb: unsupported version");
  const auto rows = static_cast<std::int64_t>(io::read_u32(in));
  const auto seq_len = static_cast<std::int64_t>(io::read_u32(in));
  const auto target_len = static_cast<std::int32_t>(io::read_u32(in));
  const auto vocab = static_cast<std::int32_t>(io::read_u32(in));
  SequenceBatch batch(rows, seq_len, target_len);
  for (auto& p : batch.prefix_len) p = io::read_i32(in);
  for (auto& v : batch.ids) v = io::read_i32(in);
  in.read(reinterpret_cast<char*>(batch.loss_mask.data()),
          static_cast<std::streamsize>(batch.loss_mask.size()));
  if (!in) throw DataError("read_narb: truncated file " + path);
  if (vocab_out) *vocab_out = vocab;
  batch.validate(vocab);
  return batch;
}

}  // namespace nargen
