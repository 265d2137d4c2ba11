#include "pira/instruction.h"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pira/errors.h"
#include "pira/instruction_builtin.h"
#include "pira/vocab.h"

namespace pira {

namespace {

using nlohmann::json;

size_t find_slot(const std::string& tmpl, const char* slot, const char* name) {
  size_t pos = tmpl.find(slot);
  if (pos == std::string::npos) {
    throw ValidationError("slot_template", std::string("missing ") + slot + " (" + name + ")");
  }
  if (tmpl.find(slot, pos + 1) != std::string::npos) {
    throw ValidationError("slot_template", std::string("duplicate ") + slot);
  }
  return pos;
}

}  // namespace

void InstructionSet::validate() const {
  if (templates.empty()) {
    throw ValidationError("instructions", "instruction set must not be empty");
  }
  std::set<int> ids;
  for (const InstructionTemplate& t : templates) {
    if (t.text.empty()) {
      throw ValidationError("instructions",
                            "instruction " + std::to_string(t.id) + " has empty text");
    }
    if (!ids.insert(t.id).second) {
      throw ValidationError("instructions", "duplicate instruction id " + std::to_string(t.id));
    }
  }
  const size_t pt = find_slot(slot_template, "{t}", "instruction");
  const size_t pq = find_slot(slot_template, "{q}", "question");
  const size_t pa = find_slot(slot_template, "{a}", "response");
  if (!(pt < pq && pq < pa)) {
    throw ValidationError("slot_template", "slots must appear in the order {t}, {q}, {a}");
  }
}

std::string InstructionSet::render(int k, const std::string& question,
                                   const std::string& response) const {
  if (k < 0 || k >= size()) throw ContractError("instruction index out of range");
  std::string out = slot_template;
  auto replace = [&out](const char* slot, const std::string& value) {
    out.replace(out.find(slot), 3, value);
  };
  replace("{t}", templates[k].text);
  replace("{q}", question);
  replace("{a}", response);
  return out;
}

InstructionSet parse_instruction_set(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("instruction file: ") + e.what());
  }
  InstructionSet set;
  try {
    set.slot_template = root.at("slot_template").get<std::string>();
    int entry = 0;
    for (const json& item : root.at("instructions")) {
      ++entry;
      InstructionTemplate t;
      try {
        t.id = item.at("id").get<int>();
        t.text = item.at("text").get<std::string>();
      } catch (const json::exception& e) {
        throw ParseError("instruction entry " + std::to_string(entry) + ": " + e.what());
      }
      set.templates.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("instruction file: ") + e.what());
  }
  set.validate();
  return set;
}

InstructionSet load_instruction_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open instruction file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_instruction_set(ss.str());
}

void save_instruction_set(const InstructionSet& set, const std::string& path) {
  set.validate();
  json root;
  root["slot_template"] = set.slot_template;
  root["instructions"] = json::array();
  for (const InstructionTemplate& t : set.templates) {
    root["instructions"].push_back({{"id", t.id}, {"text", t.text}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write instruction file: " + path);
  out << root.dump(2) << '\n';
}

const InstructionSet& default_instruction_set() {
  static const InstructionSet set = parse_instruction_set(builtin_instructions_json());
  return set;
}

std::vector<int32_t> assemble_input(const InstructionSet& set, int k,
                                    const std::string& question,
                                    const std::string& response, const Vocab& vocab) {
  if (k < 0 || k >= set.size()) throw ContractError("instruction index out of range");
  std::vector<int32_t> ids;
  ids.push_back(Vocab::kBos);
  for (int32_t t : vocab.tokenize(set.templates[k].text)) ids.push_back(t);
  ids.push_back(Vocab::kSep);
  ids.push_back(Vocab::kQuestionHeader);
  for (int32_t t : vocab.tokenize(question)) ids.push_back(t);
  ids.push_back(Vocab::kSep);
  ids.push_back(Vocab::kResponseHeader);
  for (int32_t t : vocab.tokenize(response)) ids.push_back(t);
  return ids;
}

std::vector<int32_t> assemble_concat(const std::string& question,
                                     const std::string& response, const Vocab& vocab) {
  std::vector<int32_t> ids;
  ids.push_back(Vocab::kBos);
  ids.push_back(Vocab::kQuestionHeader);
  for (int32_t t : vocab.tokenize(question)) ids.push_back(t);
  ids.push_back(Vocab::kSep);
  ids.push_back(Vocab::kResponseHeader);
  for (int32_t t : vocab.tokenize(response)) ids.push_back(t);
  return ids;
}

}  // namespace pira
