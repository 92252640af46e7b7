#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dgslow/corpus.hpp"
#include "dgslow/errors.hpp"
#include "json.hpp"

namespace dgslow {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t line, bool required) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw SchemaError(line, std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_array()) throw SchemaError(line, std::string("field '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaError(line, std::string("field '") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

DialogueInstance parse_line(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line, e.what());
  }
  if (!obj.is_object()) throw SchemaError(line, "record must be a JSON object");

  DialogueInstance inst;
  inst.persona = string_list(obj, "persona", line, false);
  inst.history = string_list(obj, "history", line, false);
  const auto utt = obj.find("utterance");
  if (utt == obj.end()) throw SchemaError(line, "missing field 'utterance'");
  if (!utt->is_string()) throw SchemaError(line, "field 'utterance' must be a string");
  inst.utterance = utt->get<std::string>();
  inst.references = string_list(obj, "references", line, true);
  if (inst.references.empty()) throw SchemaError(line, "field 'references' must not be empty");
  try {
    validate_instance(inst);
  } catch (const Error& e) {
    throw SchemaError(line, e.what());
  }
  return inst;
}

}  // namespace

void validate_instance(const DialogueInstance& instance) {
  if (split_words(instance.utterance).empty()) throw EmptyUtterance();
  if (instance.references.empty()) throw EmptyReference();
  for (const auto& ref : instance.references) {
    if (split_words(ref).empty()) throw EmptyReference();
  }
}

LoadResult parse_jsonl(std::istream& in, const LoadOptions& options) {
  LoadResult result;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      result.instances.push_back(parse_line(text, line));
    } catch (const LineError& e) {
      if (options.strict) throw;
      result.warnings.emplace_back(e.what());
    }
  }
  return result;
}

LoadResult load_jsonl(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open corpus file: " + path.string());
  return parse_jsonl(in, options);
}

std::string to_jsonl_line(const DialogueInstance& instance) {
  ordered_json obj;
  obj["persona"] = instance.persona;
  obj["history"] = instance.history;
  obj["utterance"] = instance.utterance;
  obj["references"] = instance.references;
  return obj.dump();
}

void write_jsonl(std::ostream& out, std::span<const DialogueInstance> instances) {
  for (const auto& inst : instances) out << to_jsonl_line(inst) << '\n';
}

void write_jsonl(const std::filesystem::path& path, std::span<const DialogueInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write corpus file: " + path.string());
  write_jsonl(out, instances);
  if (!out) throw IOError("write failed: " + path.string());
}

}  // namespace dgslow
