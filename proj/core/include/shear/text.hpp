#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shear {

// One instruction-following example: an instruction, an optional input
// payload, and an optional reference answer (needed for evaluation only).
struct PromptRecord {
  std::string id;
  std::string instruction;
  std::optional<std::string> input;
  std::optional<std::string> reference_output;

  bool has_input() const { return input.has_value() && !input->empty(); }
};

// A token with its byte span [start, end) into the source text.
struct Token {
  int64_t id = 0;
  std::string text;
  size_t start = 0;
  size_t end = 0;
};

enum class Segment : uint8_t { Statement, Instruction, Input };

const char* segment_name(Segment s);

enum class TokenizerKind { UnicodeRules, BpeVocabFile };

// Immutable tokenizer description. Tokenization is a pure function of
// (spec, text); the fingerprint changes iff the rules or vocab change.
struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::UnicodeRules;
  std::unordered_map<std::string, int64_t> vocab;
  std::vector<std::pair<std::string, std::string>> merges;
  std::string fingerprint;

  // Id assigned to tokens absent from a loaded vocab (one past the last id).
  int64_t unk_id() const { return static_cast<int64_t>(vocab.size()); }

  // Built-in tokenizer: splits on whitespace, every punctuation codepoint
  // is its own token. Needs no external assets; token ids are stable
  // 64-bit FNV-1a hashes folded into [0, 32768).
  static TokenizerSpec unicode_rules();

  // Loads a vocab file (one token per line, line number = id; an optional
  // section after a literal "#merges" line holds "left right" merge pairs).
  // Throws ConfigError if the file is missing or malformed.
  static TokenizerSpec from_vocab_file(const std::filesystem::path& path,
                                       TokenizerKind kind = TokenizerKind::BpeVocabFile);
};

// Id space used when no vocab is loaded (hash-folded token ids).
inline constexpr int64_t kHashedIdSpace = 1 << 15;

std::vector<Token> tokenize(const TokenizerSpec& spec, std::string_view text);

// True when `text` is non-empty and every codepoint is punctuation under
// the tokenizer's splitting rules.
bool is_punctuation_text(std::string_view text);

// Reassembles text from a kept subsequence of tokens over `source`.
// Gaps that were pure whitespace in the source are reproduced verbatim;
// a gap that spans removed tokens collapses to a single space. Removed
// runs at either end collapse to nothing.
std::string detokenize(const std::vector<Token>& kept, std::string_view source);

// Per-token include/exclude decisions. bits[i] == 1 keeps token i.
struct ActionVector {
  std::vector<uint8_t> bits;

  size_t size() const { return bits.size(); }
  static ActionVector ones(size_t n) { return {std::vector<uint8_t>(n, 1)}; }
};

// A templated prompt as tokens with segment labels and maskability flags.
struct RenderedPrompt {
  std::string id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<Segment> segments;
  std::vector<uint8_t> maskable;  // true iff segment != Statement
  std::string tokenizer_fingerprint;
  bool has_input = false;

  size_t size() const { return tokens.size(); }
  size_t maskable_count() const;

  // The supplied action with every non-maskable position forced to 1.
  ActionVector effective_action(const ActionVector& action) const;
};

// Renders the fixed skeleton "Instruction: {instruction}\nInput: {input}\n
// Output:\n". The Input line is omitted entirely when the record has no
// input. Field text is substituted verbatim.
std::string render_prompt(const PromptRecord& record);

// Renders, tokenizes, and labels a record. Tokens covering the skeleton
// literals are Statement/maskable=false (identified by byte position, not
// string matching); instruction-body tokens are Instruction and input-body
// tokens are Input, both maskable.
RenderedPrompt segment_and_mask(const PromptRecord& record, const TokenizerSpec& spec);

struct CompressedPrompt {
  std::string text;
  ActionVector effective;  // action as applied, mask overrides included

  size_t kept_count() const;
};

// Applies include/exclude decisions: token i survives iff the effective
// bit is 1. Throws ContractError on a length mismatch.
CompressedPrompt compress(const RenderedPrompt& rendered, const ActionVector& action);

// Convenience: compress(...).text.
std::string apply_actions(const RenderedPrompt& rendered, const ActionVector& action);

// Human-facing diff: removed tokens are wrapped in parentheses in place,
// all original spacing preserved, e.g. "Ident(ify) (the) odd one (out)(.)".
std::string render_with_removals(const RenderedPrompt& rendered, const ActionVector& action);

// The non-statement portion of the prompt, either the full body
// (keep_all) or the body surviving an effective action.
std::string body_text(const RenderedPrompt& rendered);
std::string body_text(const RenderedPrompt& rendered, const ActionVector& effective);

}  // namespace shear
