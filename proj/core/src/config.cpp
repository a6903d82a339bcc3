#include "shear/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "json_codec.hpp"
#include "shear/errors.hpp"

namespace shear {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

TokenizerChoice tokenizer_choice_from_json(const json& obj, const std::string& context) {
  codec::check_keys(obj, {"kind", "vocab_file"}, context);
  TokenizerChoice choice;
  if (auto it = obj.find("kind"); it != obj.end()) choice.kind = it->get<std::string>();
  if (auto it = obj.find("vocab_file"); it != obj.end()) {
    choice.vocab_file = it->get<std::string>();
  }
  choice.validate();
  return choice;
}

ordered_json tokenizer_choice_json(const TokenizerChoice& choice) {
  return ordered_json{{"kind", choice.kind},
                      {"vocab_file", choice.vocab_file.string()}};
}

}  // namespace

void TokenizerChoice::validate() const {
  if (kind != "unicode-rules" && kind != "bpe") {
    throw ConfigError("tokenizer kind must be \"unicode-rules\" or \"bpe\", got \"" +
                      kind + "\"");
  }
  if (kind == "bpe" && vocab_file.empty()) {
    throw ConfigError("bpe tokenizer requires a vocab_file");
  }
}

TokenizerSpec make_tokenizer(const TokenizerChoice& choice) {
  choice.validate();
  if (!choice.vocab_file.empty()) {
    if (!std::filesystem::exists(choice.vocab_file)) {
      throw ConfigError("tokenizer vocab_file does not exist: " +
                        choice.vocab_file.string());
    }
    return TokenizerSpec::from_vocab_file(choice.vocab_file,
                                          choice.kind == "bpe"
                                              ? TokenizerKind::BpeVocabFile
                                              : TokenizerKind::UnicodeRules);
  }
  return TokenizerSpec::unicode_rules();
}

TrainerTokenizers RunConfig::make_tokenizers() const {
  return TrainerTokenizers{make_tokenizer(policy_tokenizer),
                           make_tokenizer(counting_tokenizer),
                           make_tokenizer(faithfulness_tokenizer)};
}

RunConfig run_config_preset(const std::string& name) {
  RunConfig config;
  if (name == "desk" || name.empty()) return config;
  if (name == "paper") {
    config.training.learning_rate = 3e-5;
    config.hidden_width = 4096;
    return config;
  }
  throw ConfigError("unknown preset \"" + name + "\" (expected \"desk\" or \"paper\")");
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " +
                      e.what());
  }
  codec::check_keys(doc,
                    {"preset", "training", "feature", "hidden_width", "init_keep_bias",
                     "backend", "policy_tokenizer", "counting_tokenizer",
                     "faithfulness_tokenizer", "dataset", "cache_dir", "output_dir"},
                    "config");

  RunConfig config;
  if (auto it = doc.find("preset"); it != doc.end()) {
    config = run_config_preset(it->get<std::string>());
  }
  if (auto it = doc.find("training"); it != doc.end()) {
    // Preset values survive unless the file overrides them; the strict key
    // check runs inside from_json over the merged object.
    json merged = codec::training_config_json(config.training);
    merged.update(*it);
    config.training = codec::training_config_from_json(merged, "config.training");
  }
  if (auto it = doc.find("feature"); it != doc.end()) {
    json merged = codec::feature_config_json(config.feature);
    merged.update(*it);
    config.feature = codec::feature_config_from_json(merged, "config.feature");
  }
  if (auto it = doc.find("hidden_width"); it != doc.end()) {
    config.hidden_width = it->get<int>();
    if (config.hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
  }
  if (auto it = doc.find("init_keep_bias"); it != doc.end()) {
    config.init_keep_bias = it->get<double>();
  }
  if (auto it = doc.find("backend"); it != doc.end()) {
    json merged = codec::backend_descriptor_json(config.backend);
    merged.update(*it);
    config.backend = codec::backend_descriptor_from_json(merged, "config.backend");
  }
  if (auto it = doc.find("policy_tokenizer"); it != doc.end()) {
    config.policy_tokenizer = tokenizer_choice_from_json(*it, "config.policy_tokenizer");
  }
  if (auto it = doc.find("counting_tokenizer"); it != doc.end()) {
    config.counting_tokenizer =
        tokenizer_choice_from_json(*it, "config.counting_tokenizer");
  }
  if (auto it = doc.find("faithfulness_tokenizer"); it != doc.end()) {
    config.faithfulness_tokenizer =
        tokenizer_choice_from_json(*it, "config.faithfulness_tokenizer");
  }
  if (auto it = doc.find("dataset"); it != doc.end()) {
    config.dataset = it->get<std::string>();
  }
  if (auto it = doc.find("cache_dir"); it != doc.end()) {
    config.cache_dir = it->get<std::string>();
  }
  if (auto it = doc.find("output_dir"); it != doc.end()) {
    config.output_dir = it->get<std::string>();
  }

  // Referenced files must resolve now, not at first use.
  for (const TokenizerChoice* choice :
       {&config.policy_tokenizer, &config.counting_tokenizer,
        &config.faithfulness_tokenizer}) {
    if (!choice->vocab_file.empty() && !std::filesystem::exists(choice->vocab_file)) {
      throw ConfigError("tokenizer vocab_file does not exist: " +
                        choice->vocab_file.string());
    }
  }
  if (config.feature.provider == EmbeddingProvider::PrecomputedFile &&
      !std::filesystem::exists(config.feature.embedding_file)) {
    throw ConfigError("embedding_file does not exist: " +
                      config.feature.embedding_file.string());
  }
  return config;
}

void write_run_config(const RunConfig& config, const std::filesystem::path& path) {
  ordered_json doc{
      {"training", codec::training_config_json(config.training)},
      {"feature", codec::feature_config_json(config.feature)},
      {"hidden_width", config.hidden_width},
      {"init_keep_bias", config.init_keep_bias},
      {"backend", codec::backend_descriptor_json(config.backend)},
      {"policy_tokenizer", tokenizer_choice_json(config.policy_tokenizer)},
      {"counting_tokenizer", tokenizer_choice_json(config.counting_tokenizer)},
      {"faithfulness_tokenizer", tokenizer_choice_json(config.faithfulness_tokenizer)},
      {"dataset", config.dataset.string()},
      {"cache_dir", config.cache_dir.string()},
      {"output_dir", config.output_dir.string()},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << doc.dump(2) << "\n")) {
    throw StorageError("cannot write config echo " + path.string());
  }
}

std::vector<PromptRecord> parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read dataset " + path.string());

  std::vector<PromptRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) +
                        ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw ConfigError("dataset line " + std::to_string(line_no) +
                        ": expected a JSON object");
    }
    PromptRecord record;
    auto instr = obj.find("instruction");
    if (instr == obj.end() || !instr->is_string() ||
        instr->get<std::string>().empty()) {
      throw ConfigError("dataset line " + std::to_string(line_no) +
                        ": missing \"instruction\"");
    }
    record.instruction = instr->get<std::string>();
    if (auto it = obj.find("input"); it != obj.end() && it->is_string()) {
      record.input = it->get<std::string>();
    }
    if (auto it = obj.find("output"); it != obj.end() && it->is_string()) {
      record.reference_output = it->get<std::string>();
    }
    if (auto it = obj.find("id"); it != obj.end() && it->is_string()) {
      record.id = it->get<std::string>();
    } else {
      record.id = std::to_string(line_no);
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<JudgePair> parse_judge_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read pairs file " + path.string());

  std::vector<JudgePair> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("pairs line " + std::to_string(line_no) +
                        ": malformed JSON: " + e.what());
    }
    JudgePair pair;
    try {
      pair.task = obj.at("task").get<std::string>();
      pair.response_a = obj.at("response_a").get<std::string>();
      pair.response_b = obj.at("response_b").get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError("pairs line " + std::to_string(line_no) +
                        ": needs task, response_a, response_b");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace shear
