#include "nargen/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace nargen {

namespace {

const char* kReservedTokens[Vocab::kNumReserved] = {"<pad>", "<mask>", "<sep>", "<unk>"};

bool is_word_char(unsigned char c) { return !std::isspace(c) && !std::ispunct(c); }

std::string byte_token(unsigned b) {
  static const char* hex = "0123456789ABCDEF";
  std::string t = "<0x00>";
  t[3] = hex[(b >> 4) & 0xF];
  t[4] = hex[b & 0xF];
  return t;
}

// Parses "<0xNN>" back to a byte; -1 if the token is not of that form.
int parse_byte_token(const std::string& t) {
  if (t.size() != 6 || t.compare(0, 3, "<0x") != 0 || t[5] != '>') return -1;
  auto hexval = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  const int hi = hexval(t[3]), lo = hexval(t[4]);
  if (hi < 0 || lo < 0) return -1;
  return hi * 16 + lo;
}

}  // namespace

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else if (std::ispunct(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || id >= size()) {
    throw DimensionError("Vocab: id " + std::to_string(id) + " out of range [0," +
                         std::to_string(size()) + ")");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  if (mode_ == Mode::byte_level) {
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(kNumReserved + static_cast<std::int32_t>(c));
    return ids;
  }
  for (const std::string& tok : word_tokenize(text)) {
    auto it = token_to_id_.find(tok);
    ids.push_back(it == token_to_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  bool first = true;
  for (std::int32_t id : ids) {
    if (id < 0 || id >= size()) {
      throw DimensionError("Vocab::decode: id " + std::to_string(id) + " out of range");
    }
    if (id == kPad || id == kMask) continue;
    if (mode_ == Mode::byte_level && id >= kNumReserved) {
      out.push_back(static_cast<char>(id - kNumReserved));
      continue;
    }
    if (!first && mode_ == Mode::word) out.push_back(' ');
    out += id_to_token_[static_cast<std::size_t>(id)];
    first = false;
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("Vocab::save: cannot open " + path);
  for (const std::string& t : id_to_token_) out << t << '\n';
  if (!out) throw DataError("Vocab::save: write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("Vocab::load: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.id_to_token_.push_back(line);
  }
  if (v.size() < kNumReserved + 1) {
    throw DataError("Vocab::load: fewer than " + std::to_string(kNumReserved + 1) + " entries");
  }
  for (std::int32_t i = 0; i < kNumReserved; ++i) {
    if (v.id_to_token_[static_cast<std::size_t>(i)] != kReservedTokens[i]) {
      throw DataError("Vocab::load: reserved token mismatch at id " + std::to_string(i));
    }
  }
  bool all_bytes = v.size() == 256 + kNumReserved;
  for (std::int32_t i = kNumReserved; all_bytes && i < v.size(); ++i) {
    all_bytes = parse_byte_token(v.id_to_token_[static_cast<std::size_t>(i)]) == i - kNumReserved;
  }
  v.mode_ = all_bytes ? Mode::byte_level : Mode::word;
  if (v.mode_ == Mode::word) {
    for (std::int32_t i = kNumReserved; i < v.size(); ++i) {
      v.token_to_id_.emplace(v.id_to_token_[static_cast<std::size_t>(i)], i);
    }
  }
  return v;
}

Vocab Vocab::build(std::istream& corpus, std::size_t max_size, Mode mode) {
  Vocab v;
  v.mode_ = mode;
  for (int i = 0; i < kNumReserved; ++i) v.id_to_token_.emplace_back(kReservedTokens[i]);

  if (mode == Mode::byte_level) {
    for (unsigned b = 0; b < 256; ++b) v.id_to_token_.push_back(byte_token(b));
    return v;
  }

  // std::map keeps tokens sorted, which settles frequency ties
  // lexicographically for free.
  std::map<std::string, std::int64_t> counts;
  std::string line;
  bool any = false;
  while (std::getline(corpus, line)) {
    for (std::string& tok : word_tokenize(line)) {
      ++counts[std::move(tok)];
      any = true;
    }
  }
  if (!any) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size < static_cast<std::size_t>(kNumReserved) + 1) {
    throw ContractError("build_vocab: max_size must leave room for at least one token");
  }
  const std::size_t budget = max_size - static_cast<std::size_t>(kNumReserved);
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) {
    v.token_to_id_.emplace(ranked[i].first, v.size());
    v.id_to_token_.push_back(ranked[i].first);
  }
  return v;
}

Vocab Vocab::build(const std::string& corpus_text, std::size_t max_size, Mode mode) {
  std::istringstream in(corpus_text);
  return build(in, max_size, mode);
}

}  // namespace nargen
