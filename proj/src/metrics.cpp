#include "nargen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "nargen/common.hpp"

namespace nargen {

TokenSeq metric_tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::int64_t>;

NgramCounts count_ngrams(const TokenSeq& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return counts;
}

std::int64_t clipped_matches(const NgramCounts& hyp, const NgramCounts& ref) {
  std::int64_t matches = 0;
  for (const auto& [gram, count] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  return matches;
}

std::int64_t total_count(const NgramCounts& counts) {
  std::int64_t total = 0;
  for (const auto& [gram, count] : counts) total += count;
  return total;
}

double f1_x100(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n) {
  if (n < 1) throw ContractError("rouge_n: n must be >= 1");
  const NgramCounts hyp_counts = count_ngrams(hyp, n);
  const NgramCounts ref_counts = count_ngrams(ref, n);
  const std::int64_t hyp_total = total_count(hyp_counts);
  const std::int64_t ref_total = total_count(ref_counts);
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  const std::int64_t matches = clipped_matches(hyp_counts, ref_counts);
  return f1_x100(static_cast<double>(matches) / static_cast<double>(hyp_total),
                 static_cast<double>(matches) / static_cast<double>(ref_total));
}

double rouge_l(const TokenSeq& hyp, const TokenSeq& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hyp, ref));
  return f1_x100(lcs / static_cast<double>(hyp.size()), lcs / static_cast<double>(ref.size()));
}

double overall(double rouge1, double rouge2, double rougeL) {
  return (rouge1 + rouge2 + rougeL) / 3.0;
}

double bleu4(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, bool smooth) {
  if (hyps.size() != refs.size()) throw ContractError("bleu4: corpus sizes differ");
  if (hyps.empty()) return 0.0;
  std::int64_t matches[4] = {0, 0, 0, 0};
  std::int64_t totals[4] = {0, 0, 0, 0};
  std::int64_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<std::int64_t>(hyps[i].size());
    ref_len += static_cast<std::int64_t>(refs[i].size());
    for (int n = 1; n <= 4; ++n) {
      const NgramCounts hc = count_ngrams(hyps[i], n);
      const NgramCounts rc = count_ngrams(refs[i], n);
      matches[n - 1] += clipped_matches(hc, rc);
      totals[n - 1] += total_count(hc);
    }
  }
  double log_precision_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    std::int64_t m = matches[n - 1], t = totals[n - 1];
    if (smooth && n >= 2) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return 0.0;  // unsmoothed geometric mean collapses
    log_precision_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
  }
  double brevity = 1.0;
  if (hyp_len < ref_len && hyp_len > 0) {
    brevity = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  }
  if (hyp_len == 0) return 0.0;
  return 100.0 * brevity * std::exp(log_precision_sum / 4.0);
}

EvalReport evaluate_corpus(const std::vector<std::string>& hyp_lines,
                           const std::vector<std::string>& ref_lines, bool smooth_bleu) {
  if (hyp_lines.size() != ref_lines.size()) {
    throw DataError("evaluate: hypothesis and reference line counts differ (" +
                    std::to_string(hyp_lines.size()) + " vs " + std::to_string(ref_lines.size()) +
                    ")");
  }
  EvalReport report;
  if (hyp_lines.empty()) return report;
  std::vector<TokenSeq> hyps, refs;
  hyps.reserve(hyp_lines.size());
  refs.reserve(ref_lines.size());
  std::int64_t exact = 0;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
    hyps.push_back(metric_tokenize(hyp_lines[i]));
    refs.push_back(metric_tokenize(ref_lines[i]));
    r1 += rouge_n(hyps.back(), refs.back(), 1);
    r2 += rouge_n(hyps.back(), refs.back(), 2);
    rl += rouge_l(hyps.back(), refs.back());
    if (hyps.back() == refs.back()) ++exact;
  }
  const auto count = static_cast<double>(hyp_lines.size());
  report.rouge1 = r1 / count;
  report.rouge2 = r2 / count;
  report.rougeL = rl / count;
  report.overall = overall(report.rouge1, report.rouge2, report.rougeL);
  report.bleu4 = bleu4(hyps, refs, smooth_bleu);
  report.exact_match = 100.0 * static_cast<double>(exact) / count;
  return report;
}

namespace {
std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace

std::string report_json(const EvalReport& r) {
  return std::string("{\"rouge1\": ") + two_decimals(r.rouge1) +
         ", \"rouge2\": " + two_decimals(r.rouge2) + ", \"rougeL\": " + two_decimals(r.rougeL) +
         ", \"overall\": " + two_decimals(r.overall) + ", \"bleu4\": " + two_decimals(r.bleu4) +
         ", \"exact_match\": " + two_decimals(r.exact_match) + "}";
}

std::string report_csv_header() { return "rouge1,rouge2,rougeL,overall,bleu4,exact_match"; }

std::string report_csv_row(const EvalReport& r) {
  return two_decimals(r.rouge1) + "," + two_decimals(r.rouge2) + "," + two_decimals(r.rougeL) +
         "," + two_decimals(r.overall) + "," + two_decimals(r.bleu4) + "," +
         two_decimals(r.exact_match);
}

}  // namespace nargen
