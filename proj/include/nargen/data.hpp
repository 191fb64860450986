#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "nargen/batch.hpp"
#include "nargen/vocab.hpp"

namespace nargen {

// A corpus record: a bare document for pretraining (target empty) or an
// input/target pair for downstream tasks.
struct RawExample {
  std::string input;
  std::string target;
};

enum class CorpusFormat { lines, records };

// Streaming corpus reader; memory use is independent of corpus size.
// Malformed records are counted and skipped; more than 10% malformed over the
// whole stream raises a DataError when the end is reached.
class CorpusReader {
 public:
  CorpusReader(const std::string& path, CorpusFormat format);

  // nullopt at end of stream (after the malformed-fraction check runs).
  std::optional<RawExample> next();

  std::size_t read_count() const { return read_count_; }
  std::size_t skipped_count() const { return skipped_count_; }
  bool empty_warning() const { return finished_ && read_count_ == 0 && skipped_count_ == 0; }

 private:
  std::ifstream in_;
  std::string path_;
  CorpusFormat format_;
  std::size_t read_count_ = 0;
  std::size_t skipped_count_ = 0;
  bool finished_ = false;
};

std::vector<RawExample> load_corpus_all(const std::string& path, CorpusFormat format);

struct PipelineConfig {
  int prefix_len = 512;   // pretraining default
  int target_len = 114;   // pretraining default
  double span_rate = 0.15;
  double span_mean_len = 3.0;
  // Loss covers PAD positions of the target buffer by default: predicting
  // PAD is the length mechanism. Exposed for ablation.
  bool loss_on_pad = true;

  int seq_len() const { return prefix_len + target_len; }
  void validate() const {
    if (prefix_len < 1 || target_len < 1) {
      throw ContractError("PipelineConfig: prefix_len and target_len must be >= 1");
    }
  }
};

enum class Task { qg, summarization, mt, synthetic };

Task parse_task(const std::string& name);
std::string task_name(Task task);

// Prefix-LM row: split the document uniformly at random in [1, len-1];
// tokens before the split form the prefix (left-truncated), tokens after
// fill the target buffer (right-truncated, PAD-filled). Documents longer
// than the row are first cropped to a random window. Single-token documents
// are skipped (nullopt).
std::optional<SequenceBatch> build_prefix_lm(const RawExample& example, const PipelineConfig& cfg,
                                             const Vocab& vocab, std::uint64_t seed);

// Span-corruption row: one contiguous span (length ~ Poisson(span_mean_len),
// clamped) replaced by MASK in the input; the target buffer holds the span.
// Optional objective; rate 0 skips.
std::optional<SequenceBatch> build_span_corruption(const RawExample& example,
                                                   const PipelineConfig& cfg, const Vocab& vocab,
                                                   std::uint64_t seed);

struct TruncationCounters {
  std::int64_t input_truncated = 0;
  std::int64_t target_truncated = 0;
};

// Downstream row. For question generation the input field carries
// "answer<TAB>passage" and the prefix becomes [answer SEP passage]; other
// tasks use the input as the prefix directly. Targets are right-truncated to
// the budget with the counter recording it.
SequenceBatch format_downstream(const RawExample& example, Task task, const PipelineConfig& cfg,
                                const Vocab& vocab, TruncationCounters* counters = nullptr);

// Builds just the prefix ids for generation-time inputs of a task.
std::vector<std::int32_t> encode_prefix(const std::string& input, Task task,
                                        const PipelineConfig& cfg, const Vocab& vocab,
                                        TruncationCounters* counters = nullptr);

struct CorpusStats {
  std::int64_t count = 0;
  double mean_input_len = 0.0;
  double mean_target_len = 0.0;
  bool defined = false;  // false on an empty stream
  std::size_t skipped = 0;
};

CorpusStats corpus_stats(CorpusReader& reader, const Vocab& vocab);

}  // namespace nargen
