#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "shear/text.hpp"

namespace shear {

// Length of the longest common subsequence of two token id sequences.
size_t lcs_length(const std::vector<int64_t>& a, const std::vector<int64_t>& b);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// ROUGE-L over token id sequences: P = LCS/|gen|, R = LCS/|ref|, F1 their
// harmonic mean. All zeros when either side is empty.
RougeScore rouge_l(const std::vector<int64_t>& gen, const std::vector<int64_t>& ref);

// Convenience overload tokenizing both strings with `spec` first.
RougeScore rouge_l(const TokenizerSpec& spec, std::string_view generated,
                   std::string_view reference);

struct CompressionReport {
  size_t original_count = 0;    // non-statement tokens, counting tokenizer
  size_t compressed_count = 0;  // same count after compression
  double cr = 0.0;              // 1 - compressed / original

  size_t removed() const { return original_count - compressed_count; }
  // Tabular cell like "25.0 (4 / 16)": percentage to one decimal, then
  // removed and original counts.
  std::string display() const;
};

// Statement-excluded compression ratio. Decodes the non-statement body of
// the original prompt and of the compressed prompt (which keeps the same
// template shape since statement tokens are never removable), retokenizes
// both with counting_spec, and compares counts. Throws NumericError when
// the original body has no tokens under counting_spec.
CompressionReport compression_ratio(const RenderedPrompt& original,
                                    std::string_view compressed_text,
                                    const TokenizerSpec& counting_spec);

// Same ratio computed directly from the effective action, bypassing the
// compressed text's template landmarks. Agrees with the text route for any
// compressed_text produced by apply_actions.
CompressionReport compression_ratio(const RenderedPrompt& original,
                                    const ActionVector& effective,
                                    const TokenizerSpec& counting_spec);

// Strips the prompt template's statement text, leaving the instruction body,
// a newline separator when an input line is present, and the input body.
std::string strip_statement_text(std::string_view prompt_text);

}  // namespace shear
