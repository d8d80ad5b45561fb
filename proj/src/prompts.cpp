#include "prompts.hpp"

#include <stdexcept>

#include "issuetraj/text.hpp"

namespace issuetraj::prompts {

namespace {

const RawPrompt &latest(std::string_view name) {
  const RawPrompt *best = nullptr;
  for (const auto &p : raw_prompts()) {
    if (p.name != name) continue;
    // Versions compare numerically: v10 > v9.
    if (best == nullptr ||
        std::stoi(std::string(p.version.substr(1))) >
            std::stoi(std::string(best->version.substr(1)))) {
      best = &p;
    }
  }
  if (best == nullptr) throw std::out_of_range("no prompt template named " + std::string(name));
  return *best;
}

}  // namespace

std::string_view version_of(std::string_view name) { return latest(name).version; }

std::vector<Message> render(std::string_view name, const Values &values) {
  const std::string_view text = latest(name).text;
  constexpr std::string_view kSplit = "=== user ===";
  const auto pos = text.find(kSplit);
  std::string_view system = text;
  std::string_view user;
  if (pos != std::string_view::npos) {
    system = text.substr(0, pos);
    user = text.substr(pos + kSplit.size());
  }
  std::vector<Message> messages;
  messages.push_back({"system", trim(render_template(system, values)), std::nullopt});
  if (!user.empty()) {
    messages.push_back({"user", trim(render_template(user, values)), std::nullopt});
  }
  return messages;
}

}  // namespace issuetraj::prompts
