#include "nargen/data.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace nargen {

using nlohmann::json;

CorpusReader::CorpusReader(const std::string& path, CorpusFormat format)
    : in_(path, std::ios::binary), path_(path), format_(format) {
  if (!in_) throw DataError("load_corpus: cannot open " + path);
}

std::optional<RawExample> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (format_ == CorpusFormat::lines) {
      if (line.empty()) {
        ++skipped_count_;
        continue;
      }
      ++read_count_;
      return RawExample{std::move(line), {}};
    }
    // Record stream: one JSON object per line with string fields
    // input/target. Anything else counts as malformed and is skipped.
    json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("input") ||
        !rec["input"].is_string() || (rec.contains("target") && !rec["target"].is_string()) ||
        rec["input"].get<std::string>().empty()) {
      ++skipped_count_;
      continue;
    }
    ++read_count_;
    RawExample ex;
    ex.input = rec["input"].get<std::string>();
    if (rec.contains("target")) ex.target = rec["target"].get<std::string>();
    return ex;
  }
  finished_ = true;
  const std::size_t total = read_count_ + skipped_count_;
  if (total > 0 && skipped_count_ * 10 > total) {
    throw DataError("load_corpus: " + std::to_string(skipped_count_) + "/" + std::to_string(total) +
                    " malformed records in " + path_);
  }
  return std::nullopt;
}

std::vector<RawExample> load_corpus_all(const std::string& path, CorpusFormat format) {
  CorpusReader reader(path, format);
  std::vector<RawExample> out;
  while (auto ex = reader.next()) out.push_back(std::move(*ex));
  return out;
}

Task parse_task(const std::string& name) {
  if (name == "qg") return Task::qg;
  if (name == "summarization") return Task::summarization;
  if (name == "mt") return Task::mt;
  if (name == "synthetic") return Task::synthetic;
  throw UsageError("unknown task: " + name);
}

std::string task_name(Task task) {
  switch (task) {
    case Task::qg: return "qg";
    case Task::summarization: return "summarization";
    case Task::mt: return "mt";
    case Task::synthetic: return "synthetic";
  }
  return "?";
}

namespace {

// Writes [prefix || target || PAD...] into a fresh one-row batch.
SequenceBatch make_row(const std::vector<std::int32_t>& prefix,
                       const std::vector<std::int32_t>& target, const PipelineConfig& cfg) {
  SequenceBatch row(1, cfg.seq_len(), cfg.target_len);
  row.set_row_window(0, static_cast<std::int32_t>(prefix.size()));
  std::int64_t c = 0;
  for (std::int32_t id : prefix) row.id(0, c++) = id;
  for (std::int32_t id : target) row.id(0, c++) = id;
  // remaining target-buffer slots and the tail are PAD already
  if (!cfg.loss_on_pad) {
    for (std::int64_t i = static_cast<std::int64_t>(prefix.size() + target.size());
         i < row.seq_len; ++i) {
      row.mask(0, i) = 0;
    }
  }
  return row;
}

std::vector<std::int32_t> clip_back(std::vector<std::int32_t> ids, std::size_t budget) {
  if (ids.size() > budget) ids.resize(budget);
  return ids;
}

}  // namespace

std::optional<SequenceBatch> build_prefix_lm(const RawExample& example, const PipelineConfig& cfg,
                                             const Vocab& vocab, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::int32_t> tokens = vocab.encode(example.input);
  if (tokens.size() < 2) return std::nullopt;

  const std::size_t window = static_cast<std::size_t>(cfg.seq_len());
  if (tokens.size() > window) {
    Rng rng(stream_seed(seed, tag::window));
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(tokens.size() - window + 1)));
    tokens = std::vector<std::int32_t>(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(start + window));
  }

  Rng rng(stream_seed(seed, tag::split));
  const std::size_t split =
      1 + static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(tokens.size()) - 1));

  std::vector<std::int32_t> prefix(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(split));
  std::vector<std::int32_t> target(tokens.begin() + static_cast<std::ptrdiff_t>(split), tokens.end());
  if (prefix.size() > static_cast<std::size_t>(cfg.prefix_len)) {
    // keep the tokens nearest the split
    prefix.erase(prefix.begin(),
                 prefix.end() - static_cast<std::ptrdiff_t>(cfg.prefix_len));
  }
  target = clip_back(std::move(target), static_cast<std::size_t>(cfg.target_len));
  return make_row(prefix, target, cfg);
}

std::optional<SequenceBatch> build_span_corruption(const RawExample& example,
                                                   const PipelineConfig& cfg, const Vocab& vocab,
                                                   std::uint64_t seed) {
  cfg.validate();
  if (cfg.span_rate <= 0.0) return std::nullopt;
  std::vector<std::int32_t> tokens = vocab.encode(example.input);
  if (tokens.size() < 2) return std::nullopt;

  Rng rng(stream_seed(seed, tag::span));
  const std::int64_t max_span =
      std::min<std::int64_t>(static_cast<std::int64_t>(tokens.size()) - 1, cfg.target_len);
  const std::int64_t span_len = std::clamp<std::int64_t>(rng.poisson(cfg.span_mean_len), 1, max_span);
  const std::int64_t start = rng.uniform_int(static_cast<std::int64_t>(tokens.size()) - span_len + 1);

  std::vector<std::int32_t> target(tokens.begin() + start, tokens.begin() + start + span_len);
  std::vector<std::int32_t> prefix = std::move(tokens);
  for (std::int64_t i = start; i < start + span_len; ++i) {
    prefix[static_cast<std::size_t>(i)] = Vocab::kMask;
  }
  if (prefix.size() > static_cast<std::size_t>(cfg.prefix_len)) {
    prefix = clip_back(std::move(prefix), static_cast<std::size_t>(cfg.prefix_len));
  }
  return make_row(prefix, target, cfg);
}

std::vector<std::int32_t> encode_prefix(const std::string& input, Task task,
                                        const PipelineConfig& cfg, const Vocab& vocab,
                                        TruncationCounters* counters) {
  std::vector<std::int32_t> prefix;
  if (task == Task::qg) {
    const std::size_t tab = input.find('\t');
    if (tab == std::string::npos) {
      throw DataError("qg input must be formatted as answer<TAB>passage");
    }
    prefix = vocab.encode(input.substr(0, tab));
    prefix.push_back(Vocab::kSep);
    const std::vector<std::int32_t> passage = vocab.encode(input.substr(tab + 1));
    prefix.insert(prefix.end(), passage.begin(), passage.end());
  } else {
    prefix = vocab.encode(input);
  }
  if (prefix.size() > static_cast<std::size_t>(cfg.prefix_len)) {
    prefix.resize(static_cast<std::size_t>(cfg.prefix_len));
    if (counters) ++counters->input_truncated;
  }
  return prefix;
}

SequenceBatch format_downstream(const RawExample& example, Task task, const PipelineConfig& cfg,
                                const Vocab& vocab, TruncationCounters* counters) {
  cfg.validate();
  if (example.input.empty() || example.target.empty()) {
    throw DataError("format_downstream: input and target must be nonempty");
  }
  const std::vector<std::int32_t> prefix = encode_prefix(example.input, task, cfg, vocab, counters);
  std::vector<std::int32_t> target = vocab.encode(example.target);
  if (target.size() > static_cast<std::size_t>(cfg.target_len)) {
    target.resize(static_cast<std::size_t>(cfg.target_len));
    if (counters) ++counters->target_truncated;
  }
  return make_row(prefix, target, cfg);
}

CorpusStats corpus_stats(CorpusReader& reader, const Vocab& vocab) {
  CorpusStats stats;
  double input_sum = 0.0, target_sum = 0.0;
  while (auto ex = reader.next()) {
    input_sum += static_cast<double>(vocab.encode(ex->input).size());
    target_sum += static_cast<double>(vocab.encode(ex->target).size());
    ++stats.count;
  }
  stats.skipped = reader.skipped_count();
  if (stats.count > 0) {
    stats.defined = true;
    stats.mean_input_len = input_sum / static_cast<double>(stats.count);
    stats.mean_target_len = target_sum / static_cast<double>(stats.count);
  }
  return stats;
}

}  // namespace nargen
