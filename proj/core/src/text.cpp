#include "shear/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "shear/errors.hpp"
#include "shear/hash.hpp"

namespace shear {

namespace {

constexpr uint32_t kInvalidCp = 0xFFFFFFFF;

// Decodes one UTF-8 codepoint at `pos`; advances `pos` past it. Invalid
// bytes decode as themselves (single-byte advance) so tokenization never
// fails on malformed input.
uint32_t decode_cp(std::string_view s, size_t& pos) {
  const unsigned char b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return b0;  // stray continuation byte
  }
  if (pos + len > s.size()) {
    ++pos;
    return b0;
  }
  for (int i = 1; i < len; ++i) {
    const unsigned char bi = static_cast<unsigned char>(s[pos + i]);
    if ((bi & 0xC0) != 0x80) {
      ++pos;
      return b0;
    }
    cp = (cp << 6) | (bi & 0x3F);
  }
  pos += len;
  return cp;
}

bool is_whitespace_cp(uint32_t cp) {
  switch (cp) {
    case ' ':
    case '\t':
    case '\n':
    case '\r':
    case '\v':
    case '\f':
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct_cp(uint32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  if (cp >= 0x2010 && cp <= 0x2027) return true;  // dashes, quotes, daggers
  if (cp >= 0x2030 && cp <= 0x205E) return true;  // permille .. punct misc
  if (cp >= 0x3001 && cp <= 0x3011) return true;  // CJK punctuation
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;  // fullwidth ! .. /
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  switch (cp) {
    case 0xA1:
    case 0xA7:
    case 0xAB:
    case 0xB6:
    case 0xB7:
    case 0xBB:
    case 0xBF:
      return true;
    default:
      return false;
  }
}

int64_t token_id_for(const TokenizerSpec& spec, const std::string& text) {
  if (spec.vocab.empty()) {
    return static_cast<int64_t>(fnv1a64(text) % static_cast<uint64_t>(kHashedIdSpace));
  }
  auto it = spec.vocab.find(text);
  return it != spec.vocab.end() ? it->second : spec.unk_id();
}

std::vector<Token> tokenize_unicode_rules(const TokenizerSpec& spec, std::string_view text) {
  std::vector<Token> out;
  size_t pos = 0;
  size_t word_start = std::string::npos;
  auto flush_word = [&](size_t end) {
    if (word_start == std::string::npos) return;
    std::string t(text.substr(word_start, end - word_start));
    out.push_back(Token{token_id_for(spec, t), std::move(t), word_start, end});
    word_start = std::string::npos;
  };
  while (pos < text.size()) {
    const size_t cp_start = pos;
    const uint32_t cp = decode_cp(text, pos);
    if (is_whitespace_cp(cp)) {
      flush_word(cp_start);
    } else if (is_punct_cp(cp)) {
      flush_word(cp_start);
      std::string t(text.substr(cp_start, pos - cp_start));
      out.push_back(Token{token_id_for(spec, t), std::move(t), cp_start, pos});
    } else {
      if (word_start == std::string::npos) word_start = cp_start;
    }
  }
  flush_word(text.size());
  return out;
}

std::vector<Token> tokenize_bpe(const TokenizerSpec& spec, std::string_view text) {
  // Merge ranks keyed by "left\x1fright".
  std::unordered_map<std::string, int> rank;
  rank.reserve(spec.merges.size());
  for (size_t i = 0; i < spec.merges.size(); ++i) {
    rank.emplace(spec.merges[i].first + '\x1f' + spec.merges[i].second,
                 static_cast<int>(i));
  }

  std::vector<Token> out;
  size_t pos = 0;
  while (pos < text.size()) {
    // Skip whitespace.
    size_t ws_probe = pos;
    if (is_whitespace_cp(decode_cp(text, ws_probe))) {
      pos = ws_probe;
      continue;
    }
    // Collect one maximal non-whitespace word.
    const size_t word_start = pos;
    size_t word_end = pos;
    while (word_end < text.size()) {
      size_t probe = word_end;
      if (is_whitespace_cp(decode_cp(text, probe))) break;
      word_end = probe;
    }
    pos = word_end;

    // Initial symbols: codepoint spans within the word.
    struct Sym {
      size_t start, end;
    };
    std::vector<Sym> syms;
    for (size_t p = word_start; p < word_end;) {
      const size_t s = p;
      decode_cp(text, p);
      syms.push_back(Sym{s, p});
    }

    auto sym_text = [&](const Sym& s) {
      return std::string(text.substr(s.start, s.end - s.start));
    };

    // Repeatedly apply the lowest-ranked adjacent merge (leftmost on ties).
    while (syms.size() > 1) {
      int best_rank = -1;
      size_t best_i = 0;
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = rank.find(sym_text(syms[i]) + '\x1f' + sym_text(syms[i + 1]));
        if (it == rank.end()) continue;
        if (best_rank < 0 || it->second < best_rank) {
          best_rank = it->second;
          best_i = i;
        }
      }
      if (best_rank < 0) break;
      syms[best_i].end = syms[best_i + 1].end;
      syms.erase(syms.begin() + static_cast<ptrdiff_t>(best_i) + 1);
    }

    for (const auto& s : syms) {
      std::string t = sym_text(s);
      auto it = spec.vocab.find(t);
      const int64_t id = it != spec.vocab.end() ? it->second : spec.unk_id();
      out.push_back(Token{id, std::move(t), s.start, s.end});
    }
  }
  return out;
}

bool all_whitespace(std::string_view s) {
  size_t pos = 0;
  while (pos < s.size()) {
    if (!is_whitespace_cp(decode_cp(s, pos))) return false;
  }
  return true;
}

}  // namespace

bool is_punctuation_text(std::string_view text) {
  if (text.empty()) return false;
  size_t pos = 0;
  while (pos < text.size()) {
    if (!is_punct_cp(decode_cp(text, pos))) return false;
  }
  return true;
}

const char* segment_name(Segment s) {
  switch (s) {
    case Segment::Statement:
      return "STATEMENT";
    case Segment::Instruction:
      return "INSTRUCTION";
    case Segment::Input:
      return "INPUT";
  }
  return "?";
}

TokenizerSpec TokenizerSpec::unicode_rules() {
  TokenizerSpec spec;
  spec.kind = TokenizerKind::UnicodeRules;
  spec.fingerprint = sha256_hex("shear-tokenizer:unicode-rules:v1");
  return spec;
}

TokenizerSpec TokenizerSpec::from_vocab_file(const std::filesystem::path& path,
                                             TokenizerKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("tokenizer vocab file not readable: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  TokenizerSpec spec;
  spec.kind = kind;
  const char* kind_tag = kind == TokenizerKind::BpeVocabFile ? "bpe" : "unicode-rules";
  spec.fingerprint = sha256_hex(std::string("shear-tokenizer:") + kind_tag + ":v1\n" + content);

  std::istringstream lines(content);
  std::string line;
  bool in_merges = false;
  int64_t next_id = 0;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!in_merges && line == "#merges") {
      in_merges = true;
      continue;
    }
    if (!in_merges) {
      if (!spec.vocab.emplace(line, next_id).second) {
        throw ConfigError("duplicate vocab token at line " + std::to_string(line_no) +
                          ": \"" + line + "\"");
      }
      ++next_id;
    } else {
      if (line.empty()) continue;
      const size_t sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
        throw ConfigError("malformed merge at line " + std::to_string(line_no) +
                          ": \"" + line + "\"");
      }
      spec.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }
  return spec;
}

std::vector<Token> tokenize(const TokenizerSpec& spec, std::string_view text) {
  if (spec.kind == TokenizerKind::BpeVocabFile) return tokenize_bpe(spec, text);
  return tokenize_unicode_rules(spec, text);
}

std::string detokenize(const std::vector<Token>& kept, std::string_view source) {
  if (kept.empty()) return "";
  std::string out;
  size_t prev_end = 0;
  for (size_t i = 0; i < kept.size(); ++i) {
    const Token& t = kept[i];
    if (t.end > source.size() || t.start > t.end) {
      throw IntegrityError("detokenize: token span [" + std::to_string(t.start) + ", " +
                           std::to_string(t.end) + ") out of bounds for source of " +
                           std::to_string(source.size()) + " bytes");
    }
    if (i == 0) {
      // Leading whitespace survives only when nothing before the first
      // kept token was removed.
      std::string_view lead = source.substr(0, t.start);
      if (all_whitespace(lead)) out.append(lead);
    } else {
      if (t.start < prev_end) {
        throw IntegrityError("detokenize: token spans out of order");
      }
      std::string_view gap = source.substr(prev_end, t.start - prev_end);
      if (all_whitespace(gap)) {
        out.append(gap);
      } else {
        out.push_back(' ');  // gap spans removed tokens
      }
    }
    out.append(source.substr(t.start, t.end - t.start));
    prev_end = t.end;
  }
  std::string_view tail = source.substr(prev_end);
  if (all_whitespace(tail)) out.append(tail);
  return out;
}

size_t RenderedPrompt::maskable_count() const {
  return static_cast<size_t>(std::count(maskable.begin(), maskable.end(), uint8_t{1}));
}

ActionVector RenderedPrompt::effective_action(const ActionVector& action) const {
  if (action.size() != tokens.size()) {
    throw ContractError("action length " + std::to_string(action.size()) +
                        " does not match token count " + std::to_string(tokens.size()));
  }
  ActionVector eff = action;
  for (size_t i = 0; i < eff.bits.size(); ++i) {
    if (!maskable[i]) eff.bits[i] = 1;
  }
  return eff;
}

std::string render_prompt(const PromptRecord& record) {
  std::string out = "Instruction: ";
  out += record.instruction;
  if (record.has_input()) {
    out += "\nInput: ";
    out += *record.input;
  }
  out += "\nOutput:\n";
  return out;
}

RenderedPrompt segment_and_mask(const PromptRecord& record, const TokenizerSpec& spec) {
  RenderedPrompt r;
  r.id = record.id;
  r.has_input = record.has_input();
  r.tokenizer_fingerprint = spec.fingerprint;

  const std::string instr_prefix = "Instruction: ";
  const size_t instr_begin = instr_prefix.size();
  const size_t instr_end = instr_begin + record.instruction.size();
  size_t input_begin = 0, input_end = 0;

  r.text = render_prompt(record);
  if (r.has_input) {
    input_begin = instr_end + std::string("\nInput: ").size();
    input_end = input_begin + record.input->size();
  }

  r.tokens = tokenize(spec, r.text);
  r.segments.reserve(r.tokens.size());
  r.maskable.reserve(r.tokens.size());
  for (const Token& t : r.tokens) {
    Segment seg = Segment::Statement;
    if (t.start >= instr_begin && t.end <= instr_end) {
      seg = Segment::Instruction;
    } else if (r.has_input && t.start >= input_begin && t.end <= input_end) {
      seg = Segment::Input;
    }
    r.segments.push_back(seg);
    r.maskable.push_back(seg != Segment::Statement ? 1 : 0);
  }
  return r;
}

size_t CompressedPrompt::kept_count() const {
  return static_cast<size_t>(
      std::count(effective.bits.begin(), effective.bits.end(), uint8_t{1}));
}

CompressedPrompt compress(const RenderedPrompt& rendered, const ActionVector& action) {
  CompressedPrompt c;
  c.effective = rendered.effective_action(action);
  std::vector<Token> kept;
  kept.reserve(rendered.tokens.size());
  for (size_t i = 0; i < rendered.tokens.size(); ++i) {
    if (c.effective.bits[i]) kept.push_back(rendered.tokens[i]);
  }
  c.text = detokenize(kept, rendered.text);
  return c;
}

std::string apply_actions(const RenderedPrompt& rendered, const ActionVector& action) {
  return compress(rendered, action).text;
}

std::string render_with_removals(const RenderedPrompt& rendered, const ActionVector& action) {
  const ActionVector eff = rendered.effective_action(action);
  std::string_view source = rendered.text;
  std::string out;
  size_t prev_end = 0;
  for (size_t i = 0; i < rendered.tokens.size(); ++i) {
    const Token& t = rendered.tokens[i];
    out.append(source.substr(prev_end, t.start - prev_end));
    if (eff.bits[i]) {
      out.append(source.substr(t.start, t.end - t.start));
    } else {
      out.push_back('(');
      out.append(source.substr(t.start, t.end - t.start));
      out.push_back(')');
    }
    prev_end = t.end;
  }
  out.append(source.substr(prev_end));
  return out;
}

std::string body_text(const RenderedPrompt& rendered) {
  std::vector<Token> body;
  for (size_t i = 0; i < rendered.tokens.size(); ++i) {
    if (rendered.maskable[i]) body.push_back(rendered.tokens[i]);
  }
  return detokenize(body, rendered.text);
}

std::string body_text(const RenderedPrompt& rendered, const ActionVector& effective) {
  if (effective.size() != rendered.tokens.size()) {
    throw ContractError("effective action length does not match token count");
  }
  std::vector<Token> body;
  for (size_t i = 0; i < rendered.tokens.size(); ++i) {
    if (rendered.maskable[i] && effective.bits[i]) body.push_back(rendered.tokens[i]);
  }
  return detokenize(body, rendered.text);
}

}  // namespace shear
