#pragma once

namespace pira {

// JSON text of the bundled default instruction file.
const char* builtin_instructions_json();

}  // namespace pira
