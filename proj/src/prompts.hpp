#pragma once

// Prompt templates shipped in resources/prompts as `{role}.v{N}.txt`. The
// system part comes first; a line `=== user ===` starts the user part.
// Placeholders are written `{{name}}`.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "issuetraj/llm_gateway.hpp"

namespace issuetraj::prompts {

struct RawPrompt {
  std::string_view name;
  std::string_view version;
  std::string_view text;
};

const std::vector<RawPrompt> &raw_prompts();

using Values = std::vector<std::pair<std::string, std::string>>;

/// Latest version of the named template rendered into system + user
/// messages. Throws std::out_of_range for an unknown name.
std::vector<Message> render(std::string_view name, const Values &values);

std::string_view version_of(std::string_view name);

}  // namespace issuetraj::prompts
