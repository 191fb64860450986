#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nargen {

using TokenSeq = std::vector<std::string>;

// Scorer tokenization: lowercase + whitespace split. Documented so reported
// numbers are reproducible within this artifact.
TokenSeq metric_tokenize(std::string_view text);

// N-gram overlap F1 with clipped counts, x100. Empty hyp or ref scores 0.
double rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n);

// Longest-common-subsequence F1, x100.
double rouge_l(const TokenSeq& hyp, const TokenSeq& ref);

// Arithmetic mean of ROUGE-1/2/L; the OVERALL summary column.
double overall(double rouge1, double rouge2, double rougeL);

// Corpus-level BLEU-4: geometric mean of clipped 1..4-gram precisions times
// the brevity penalty. Unsmoothed by default; `smooth` adds one to the
// 2..4-gram match and total counts.
double bleu4(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
             bool smooth = false);

struct EvalReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double overall = 0.0;
  double bleu4 = 0.0;
  double exact_match = 0.0;
};

// Mean per-pair ROUGE scores, corpus BLEU, and exact-match rate over paired
// lines; all on the 0..100 scale.
EvalReport evaluate_corpus(const std::vector<std::string>& hyp_lines,
                           const std::vector<std::string>& ref_lines, bool smooth_bleu = false);

// Single-line JSON with 2-decimal reporting, and the matching CSV row.
std::string report_json(const EvalReport& report);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);

}  // namespace nargen
