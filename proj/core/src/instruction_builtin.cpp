#include "pira/instruction_builtin.h"

namespace pira {

// Byte-identical to core/data/instructions_default.json; a unit test keeps
// the two in sync.
const char* builtin_instructions_json() {
  return R"json({
  "slot_template": "{t}\n\nquestion:\n{q}\n\nresponse:\n{a}",
  "instructions": [
    {
      "id": 1,
      "text": "Evaluate whether the response demonstrates a reliable grasp of facts and reasoning. Consider if any parts appear speculative, misleading, or inconsistent with known information. Provide your overall judgment of its truthfulness."
    },
    {
      "id": 2,
      "text": "Judge the extent to which the response stays aligned with the user’s intent and avoids digressions. Highlight any parts that seem tangential or dilute the main purpose of the answer."
    },
    {
      "id": 3,
      "text": "Determine whether the response clearly fulfills the user’s underlying intent. Focus on how directly and understandably it addresses the core question without overcomplicating or oversimplifying."
    },
    {
      "id": 4,
      "text": "Assess whether the response demonstrates logical flow, internal consistency, and coherent argumentation. Note if reasoning steps are missing, circular, or contradictory."
    },
    {
      "id": 5,
      "text": "Evaluate the response’s utility for a general user. Does it offer sufficient detail, context, and actionable insight? Consider whether it is understandable to non-experts and avoids unnecessary technical jargon."
    },
    {
      "id": 6,
      "text": "Examine how well the response justifies its claims. Does it provide reasoning that is sound, evidence-based, and transparent? Identify whether the explanation shows deep understanding or shallow paraphrasing."
    },
    {
      "id": 7,
      "text": "Assess the clarity, conciseness, and stylistic balance of the response. Is it fluent and engaging while remaining precise? Note both stylistic strengths and weaknesses that affect readability."
    },
    {
      "id": 8,
      "text": "Reflect on how faithfully the response follows the original instruction while maintaining creative, well-structured expression. Evaluate whether the tone, structure, and style enhance or detract from the intent."
    },
    {
      "id": 9,
      "text": "Analyze the response critically: what are its major strengths, weaknesses, and possible risks if used in a real context (e.g., misunderstanding, misinformation, or harm)? Offer a short paragraph on each."
    },
    {
      "id": 10,
      "text": "Provide an overall evaluation of the response’s completeness, tone, and coherence. Discuss whether it could be improved, and if so, which aspects—content, logic, or presentation—should be prioritized."
    }
  ]
}
)json";
}

}  // namespace pira
