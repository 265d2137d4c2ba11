#pragma once

#include <string>
#include <vector>

namespace pira {

class Vocab;

// How a (question, response) pair is presented to the reward model:
// `instructed` prepends an evaluation-instruction prefix, `concat` feeds
// the bare question/response concatenation.
enum class InputFormat { instructed, concat };

struct InstructionTemplate {
  int id = 0;
  std::string text;
};

// An ordered set of evaluation instructions plus the textual layout that
// places an instruction, the question, and the response. The slot template
// must contain the placeholders {t}, {q}, {a} exactly once and in that
// order.
struct InstructionSet {
  std::vector<InstructionTemplate> templates;
  std::string slot_template;

  int size() const { return static_cast<int>(templates.size()); }
  // Renders the plain-text form of entry k for a given pair.
  std::string render(int k, const std::string& question, const std::string& response) const;
  void validate() const;
};

// Parses the JSON instruction format and validates the result.
InstructionSet load_instruction_set(const std::string& path);
InstructionSet parse_instruction_set(const std::string& json_text);
void save_instruction_set(const InstructionSet& set, const std::string& path);

// The ten evaluation instructions bundled with the project (the same
// content as core/data/instructions_default.json).
const InstructionSet& default_instruction_set();

// Token-level input assembly:
//   BOS  t...  SEP  "question:"  q...  SEP  "response:"  a...
// mirroring the slot template's segment order. Unknown words map to UNK.
std::vector<int32_t> assemble_input(const InstructionSet& set, int k,
                                    const std::string& question,
                                    const std::string& response, const Vocab& vocab);

// Instruction-free variant used by the plain-concatenation baseline:
//   BOS  "question:"  q...  SEP  "response:"  a...
std::vector<int32_t> assemble_concat(const std::string& question,
                                     const std::string& response, const Vocab& vocab);

}  // namespace pira
