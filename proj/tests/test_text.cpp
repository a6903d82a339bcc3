#include <doctest.h>

#include <string>
#include <vector>

#include "shear/errors.hpp"
#include "shear/rng.hpp"
#include "shear/text.hpp"
#include "support/helpers.hpp"

using namespace shear;
using shear::test::write_file;

namespace {

PromptRecord record_with(const std::string& instruction, const std::string& input = "") {
  PromptRecord r;
  r.id = "r";
  r.instruction = instruction;
  if (!input.empty()) r.input = input;
  return r;
}

}  // namespace

TEST_SUITE("text") {

TEST_CASE("template renders the three-line skeleton") {
  PromptRecord r = record_with("Identify the odd one out.", "Twitter, Instagram, Telegram");
  CHECK(render_prompt(r) ==
        "Instruction: Identify the odd one out.\n"
        "Input: Twitter, Instagram, Telegram\n"
        "Output:\n");
}

TEST_CASE("template omits the Input line when input is absent or empty") {
  CHECK(render_prompt(record_with("Name three US presidents.")) ==
        "Instruction: Name three US presidents.\nOutput:\n");

  PromptRecord r = record_with("Name three US presidents.");
  r.input = "";  // present but empty counts as absent
  CHECK(render_prompt(r) == "Instruction: Name three US presidents.\nOutput:\n");
}

TEST_CASE("unicode-rules tokenizer splits whitespace and isolates punctuation") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  std::vector<Token> tokens = tokenize(spec, "Hello, world! x2");
  std::vector<std::string> texts;
  for (const Token& t : tokens) texts.push_back(t.text);
  CHECK(texts == std::vector<std::string>{"Hello", ",", "world", "!", "x2"});
  // spans are ordered, non-overlapping, and tile the non-gap source
  for (size_t i = 1; i < tokens.size(); ++i) {
    CHECK(tokens[i - 1].end <= tokens[i].start);
  }
}

TEST_CASE("hashed token ids stay in the folded id space") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  for (const Token& t : tokenize(spec, "the quick brown fox, it jumped!")) {
    CHECK(t.id >= 0);
    CHECK(t.id < kHashedIdSpace);
  }
  // same text, same id
  std::vector<Token> a = tokenize(spec, "fox fox");
  REQUIRE(a.size() == 2);
  CHECK(a[0].id == a[1].id);
}

TEST_CASE("round trip: detokenize(tokenize(t), t) == t") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  const std::vector<std::string> cases = {
      "",
      "plain words here",
      "  leading and trailing  ",
      "tabs\tand\nnewlines mixed  up",
      "punct,clusters!!(nested)...",
      "unicode caf\xc3\xa9 \xe2\x82\xac"
      "5, \xd0\xbf\xd1\x80\xd0\xb8\xd0\xb2\xd0\xb5\xd1\x82",
      "Instruction: Identify the odd one out.\nInput: a, b\nOutput:\n",
  };
  for (const std::string& t : cases) {
    CHECK(detokenize(tokenize(spec, t), t) == t);
  }

  Rng rng(2024);
  const std::string alphabet = "ab .,!\t\ncd:;e(f)g";
  for (int i = 0; i < 100; ++i) {
    std::string t;
    const size_t len = rng.bounded(40);
    for (size_t j = 0; j < len; ++j) t += alphabet[rng.bounded(alphabet.size())];
    CHECK(detokenize(tokenize(spec, t), t) == t);
  }
}

TEST_CASE("segment labels partition tokens and statement tokens are unmaskable") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  PromptRecord r = record_with("Identify the odd one out.", "Twitter, Instagram");
  RenderedPrompt rp = segment_and_mask(r, spec);

  REQUIRE(rp.tokens.size() == rp.segments.size());
  REQUIRE(rp.tokens.size() == rp.maskable.size());
  CHECK(rp.has_input);

  size_t statement = 0, instruction = 0, input = 0;
  for (size_t i = 0; i < rp.tokens.size(); ++i) {
    switch (rp.segments[i]) {
      case Segment::Statement:
        ++statement;
        CHECK(!rp.maskable[i]);
        break;
      case Segment::Instruction:
        ++instruction;
        CHECK(rp.maskable[i]);
        break;
      case Segment::Input:
        ++input;
        CHECK(rp.maskable[i]);
        break;
    }
  }
  // "Instruction" ":" "Input" ":" "Output" ":" skeleton tokens
  CHECK(statement == 6);
  // Identify the odd one out .
  CHECK(instruction == 6);
  // Twitter , Instagram
  CHECK(input == 3);
}

TEST_CASE("user text containing Output: is not treated as skeleton") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Print Output: done"), spec);
  size_t maskable_output_tokens = 0;
  for (size_t i = 0; i < rp.tokens.size(); ++i) {
    if (rp.tokens[i].text == "Output" && rp.maskable[i]) ++maskable_output_tokens;
  }
  CHECK(maskable_output_tokens == 1);
}

TEST_CASE("apply_actions with all ones reproduces the rendered text") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out.", "a, b"), spec);
  CHECK(apply_actions(rp, ActionVector::ones(rp.size())) == rp.text);
}

TEST_CASE("statement tokens survive every action") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out.", "a, b"), spec);

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ActionVector action;
    action.bits.resize(rp.size());
    for (size_t i = 0; i < rp.size(); ++i) action.bits[i] = rng.bernoulli(0.5) ? 1 : 0;
    CompressedPrompt cp = compress(rp, action);
    CHECK(cp.text.find("Instruction") != std::string::npos);
    CHECK(cp.text.find("Output") != std::string::npos);
    // kept count equals the popcount of the effective action
    size_t ones = 0;
    for (uint8_t b : cp.effective.bits) ones += b;
    CHECK(cp.kept_count() == ones);
    for (size_t i = 0; i < rp.size(); ++i) {
      if (!rp.maskable[i]) CHECK(cp.effective.bits[i] == 1);
    }
  }
}

TEST_CASE("gap collapse: removed runs become a single space") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out."), spec);
  // drop only "the" (token index: Instruction : Identify the ...)
  ActionVector action = ActionVector::ones(rp.size());
  for (size_t i = 0; i < rp.size(); ++i) {
    if (rp.tokens[i].text == "the") action.bits[i] = 0;
  }
  CHECK(apply_actions(rp, action) == "Instruction: Identify odd one out.\nOutput:\n");
}

TEST_CASE("dropping every maskable token leaves the collapsed skeleton") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out."), spec);
  ActionVector none;
  none.bits.assign(rp.size(), 0);
  // statement tokens are forced back in; the gap over the removed body
  // collapses to one space
  CHECK(apply_actions(rp, none) == "Instruction: Output:\n");
}

TEST_CASE("render_with_removals parenthesizes removed tokens in place") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out."), spec);
  ActionVector action = ActionVector::ones(rp.size());
  for (size_t i = 0; i < rp.size(); ++i) {
    const std::string& t = rp.tokens[i].text;
    if (t == "the" || t == "out" || t == ".") action.bits[i] = 0;
  }
  CHECK(render_with_removals(rp, action) ==
        "Instruction: Identify (the) odd one (out)(.)\nOutput:\n");
}

TEST_CASE("bpe vocab file reproduces subword segmentation") {
  test::TempDir tmp;
  const std::string vocab =
      "Ident\n"
      "ify\n"
      "the\n"
      "odd\n"
      "one\n"
      "out\n"
      ".\n"
      "#merges\n"
      "I d\n"
      "Id e\n"
      "Ide n\n"
      "Iden t\n"
      "i f\n"
      "if y\n"
      "t h\n"
      "th e\n"
      "o d\n"
      "od d\n"
      "o n\n"
      "on e\n"
      "o u\n"
      "ou t\n";
  write_file(tmp / "vocab.txt", vocab);
  TokenizerSpec spec = TokenizerSpec::from_vocab_file(tmp / "vocab.txt");

  std::vector<Token> tokens = tokenize(spec, "Identify the odd one out.");
  std::vector<std::string> texts;
  std::vector<int64_t> ids;
  for (const Token& t : tokens) {
    texts.push_back(t.text);
    ids.push_back(t.id);
  }
  CHECK(texts == std::vector<std::string>{"Ident", "ify", "the", "odd", "one", "out", "."});
  CHECK(ids == std::vector<int64_t>{0, 1, 2, 3, 4, 5, 6});

  // the spec example rendering: subword and word removals annotated in place
  RenderedPrompt rp = segment_and_mask(record_with("Identify the odd one out."), spec);
  ActionVector action = ActionVector::ones(rp.size());
  for (size_t i = 0; i < rp.size(); ++i) {
    const std::string& t = rp.tokens[i].text;
    if (t == "ify" || t == "the" || t == "out" || t == ".") action.bits[i] = 0;
  }
  CHECK(render_with_removals(rp, action).find("Ident(ify) (the) odd one (out)(.)") !=
        std::string::npos);

  // unknown words fall back to unk_id
  std::vector<Token> unk = tokenize(spec, "zzz");
  REQUIRE(!unk.empty());
  CHECK(unk[0].id == spec.unk_id());

  // round trip holds under byte spans regardless of vocab
  const std::string t = "Identify the odd one out.";
  CHECK(detokenize(tokenize(spec, t), t) == t);
}

TEST_CASE("vocab file errors carry line numbers") {
  test::TempDir tmp;
  write_file(tmp / "dup.txt", "a\nb\na\n");
  CHECK_THROWS_AS(TokenizerSpec::from_vocab_file(tmp / "dup.txt"), ConfigError);
  write_file(tmp / "badmerge.txt", "a\n#merges\nonlyonefield\n");
  CHECK_THROWS_AS(TokenizerSpec::from_vocab_file(tmp / "badmerge.txt"), ConfigError);
  CHECK_THROWS_AS(TokenizerSpec::from_vocab_file(tmp / "missing.txt"), ConfigError);
}

TEST_CASE("fingerprint changes iff rules or vocab change") {
  test::TempDir tmp;
  write_file(tmp / "v1.txt", "a\nb\n");
  write_file(tmp / "v2.txt", "a\nc\n");
  write_file(tmp / "v1-copy.txt", "a\nb\n");
  TokenizerSpec u = TokenizerSpec::unicode_rules();
  TokenizerSpec v1 = TokenizerSpec::from_vocab_file(tmp / "v1.txt");
  TokenizerSpec v2 = TokenizerSpec::from_vocab_file(tmp / "v2.txt");
  TokenizerSpec v1b = TokenizerSpec::from_vocab_file(tmp / "v1-copy.txt");
  CHECK(u.fingerprint == TokenizerSpec::unicode_rules().fingerprint);
  CHECK(v1.fingerprint == v1b.fingerprint);
  CHECK(v1.fingerprint != v2.fingerprint);
  CHECK(v1.fingerprint != u.fingerprint);
}

TEST_CASE("effective_action forces non-maskable bits and checks length") {
  TokenizerSpec spec = TokenizerSpec::unicode_rules();
  RenderedPrompt rp = segment_and_mask(record_with("Keep me honest."), spec);
  ActionVector wrong;
  wrong.bits.assign(rp.size() + 1, 1);
  CHECK_THROWS_AS(rp.effective_action(wrong), ContractError);

  ActionVector zeros;
  zeros.bits.assign(rp.size(), 0);
  ActionVector eff = rp.effective_action(zeros);
  for (size_t i = 0; i < rp.size(); ++i) {
    CHECK(eff.bits[i] == (rp.maskable[i] ? 0 : 1));
  }
}

TEST_CASE("is_punctuation_text matches the splitting rules") {
  CHECK(is_punctuation_text("."));
  CHECK(is_punctuation_text("?!"));
  CHECK(!is_punctuation_text("a."));
  CHECK(!is_punctuation_text(""));
  CHECK(!is_punctuation_text("word"));
}

}  // TEST_SUITE
