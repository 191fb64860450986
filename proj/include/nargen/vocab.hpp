#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nargen/common.hpp"

namespace nargen {

// Token <-> id mapping with the reserved ids the method depends on. The
// reserved surface forms all contain punctuation, so corpus tokenization can
// never produce them and no encoder output ever contains a reserved id.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kSep = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::int32_t kNumReserved = 4;

  enum class Mode { word, byte_level };

  Mode mode() const { return mode_; }
  std::int32_t size() const { return static_cast<std::int32_t>(id_to_token_.size()); }
  const std::string& token(std::int32_t id) const;
  bool is_reserved(std::int32_t id) const { return id >= 0 && id < kNumReserved; }

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // Word mode: whitespace/punctuation-split tokens by descending frequency,
  // ties lexicographic, truncated to max_size (including the reserved slots).
  // Byte mode: the 256 byte tokens after the reserved ids; V is always 260.
  static Vocab build(std::istream& corpus, std::size_t max_size, Mode mode);
  static Vocab build(const std::string& corpus_text, std::size_t max_size, Mode mode);

 private:
  Mode mode_ = Mode::word;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

// Splits on whitespace; punctuation characters become single-char tokens.
std::vector<std::string> word_tokenize(std::string_view text);

}  // namespace nargen
