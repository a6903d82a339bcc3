#include "shear/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "landmark_scan.hpp"
#include "shear/errors.hpp"

namespace shear {

size_t lcs_length(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  if (a.empty() || b.empty()) return 0;
  // Two-row DP keeps memory at O(min side) for long generations.
  const std::vector<int64_t>& longer = a.size() >= b.size() ? a : b;
  const std::vector<int64_t>& shorter = a.size() >= b.size() ? b : a;
  std::vector<size_t> prev(shorter.size() + 1, 0);
  std::vector<size_t> cur(shorter.size() + 1, 0);
  for (size_t i = 1; i <= longer.size(); ++i) {
    for (size_t j = 1; j <= shorter.size(); ++j) {
      if (longer[i - 1] == shorter[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[shorter.size()];
}

RougeScore rouge_l(const std::vector<int64_t>& gen, const std::vector<int64_t>& ref) {
  RougeScore r;
  if (gen.empty() || ref.empty()) return r;
  const double lcs = static_cast<double>(lcs_length(gen, ref));
  r.precision = lcs / static_cast<double>(gen.size());
  r.recall = lcs / static_cast<double>(ref.size());
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

RougeScore rouge_l(const TokenizerSpec& spec, std::string_view generated,
                   std::string_view reference) {
  std::vector<int64_t> gen_ids, ref_ids;
  for (const Token& t : tokenize(spec, generated)) gen_ids.push_back(t.id);
  for (const Token& t : tokenize(spec, reference)) ref_ids.push_back(t.id);
  return rouge_l(gen_ids, ref_ids);
}

std::string CompressionReport::display() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.1f (%zu / %zu)", cr * 100.0, removed(),
                original_count);
  return buf;
}

namespace {

CompressionReport report_from_bodies(const std::string& original_body,
                                     const std::string& compressed_body,
                                     const TokenizerSpec& counting_spec) {
  CompressionReport rep;
  rep.original_count = tokenize(counting_spec, original_body).size();
  if (rep.original_count == 0) {
    throw NumericError("compression ratio undefined: original prompt has no "
                       "non-statement tokens under the counting tokenizer");
  }
  rep.compressed_count = tokenize(counting_spec, compressed_body).size();
  rep.cr = 1.0 - static_cast<double>(rep.compressed_count) /
                     static_cast<double>(rep.original_count);
  return rep;
}

}  // namespace

std::string strip_statement_text(std::string_view prompt_text) {
  constexpr std::string_view kInstr = "Instruction: ";
  constexpr std::string_view kInput = "Input: ";
  constexpr std::string_view kOutput = "Output:";

  std::string_view rest = prompt_text;
  if (rest.substr(0, kInstr.size()) == kInstr) {
    rest.remove_prefix(kInstr.size());
  }
  // Landmarks bind the same way parse_prompt_bodies reads them, so the
  // counted body never swallows skeleton tokens even when compression
  // collapsed the newline in front of a marker.
  const size_t output_pos = internal::last_landmark(rest, kOutput);
  if (output_pos != std::string_view::npos) {
    rest = rest.substr(0, output_pos);
  }
  const size_t input_pos = internal::first_landmark(rest, kInput);
  if (input_pos == std::string_view::npos) {
    return std::string(internal::rtrim(rest));
  }
  std::string out(internal::rtrim(rest.substr(0, input_pos)));
  out.push_back('\n');
  out.append(internal::rtrim(rest.substr(input_pos + kInput.size())));
  return out;
}

CompressionReport compression_ratio(const RenderedPrompt& original,
                                    std::string_view compressed_text,
                                    const TokenizerSpec& counting_spec) {
  return report_from_bodies(body_text(original), strip_statement_text(compressed_text),
                            counting_spec);
}

CompressionReport compression_ratio(const RenderedPrompt& original,
                                    const ActionVector& effective,
                                    const TokenizerSpec& counting_spec) {
  return report_from_bodies(body_text(original), body_text(original, effective),
                            counting_spec);
}

}  // namespace shear
