#include "issuetraj/llm_gateway.hpp"

#include <array>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/http.hpp"
#include "issuetraj/text.hpp"

namespace issuetraj {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Role, std::string_view>, 7> kRoleNames = {{
    {Role::label_classifier, "label_classifier"},
    {Role::field_bucket_classifier, "field_bucket_classifier"},
    {Role::comment_analyst, "comment_analyst"},
    {Role::link_summarizer, "link_summarizer"},
    {Role::vision_describer, "vision_describer"},
    {Role::trajectory_synthesizer, "trajectory_synthesizer"},
    {Role::quality_judge, "quality_judge"},
}};

struct StubItem {
  std::string text;
  bool fail = false;
};

StubItem stub_item_from_json(const json &j) {
  if (j.is_string()) return {j.get<std::string>(), false};
  if (j.is_object() && j.contains("fail")) {
    return {j["fail"].is_string() ? j["fail"].get<std::string>() : "scripted failure", true};
  }
  throw ConfigError("stub script entries must be strings or {\"fail\": ...}");
}

}  // namespace

std::string_view to_string(Role role) {
  for (const auto &[r, n] : kRoleNames) {
    if (r == role) return n;
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (const auto &[r, n] : kRoleNames) {
    if (n == name) return r;
  }
  throw UnknownRole(fmt::format("unknown LLM role '{}'", name));
}

const std::vector<Role> &all_roles() {
  static const std::vector<Role> kAll = [] {
    std::vector<Role> v;
    for (const auto &[r, n] : kRoleNames) v.push_back(r);
    return v;
  }();
  return kAll;
}

RoutingTable RoutingTable::defaults() {
  RoutingTable t;
  auto add = [&t](Role role, const char *model, double temperature, int max_tokens,
                  bool vision = false) {
    t.routes_[role] = ModelRoute{role, model, temperature, max_tokens, vision};
  };
  add(Role::label_classifier, "gpt-4o-mini", 0.0, 128);
  add(Role::field_bucket_classifier, "gpt-4o-mini", 0.0, 256);
  add(Role::comment_analyst, "gpt-5.4-mini", 0.2, 4096);
  add(Role::link_summarizer, "gpt-5.4-mini", 0.2, 4096);
  add(Role::vision_describer, "gpt-5.4-mini", 0.2, 4096, true);
  add(Role::trajectory_synthesizer, "gpt-4o-mini", 0.2, 4096);
  add(Role::quality_judge, "gpt-5.4", 0.0, 4096);
  return t;
}

void RoutingTable::apply_overrides(const json &routes) {
  if (routes.is_null()) return;
  if (!routes.is_object()) throw ConfigError("'routes' must be an object keyed by role");
  for (const auto &[name, spec] : routes.items()) {
    const Role role = role_from_string(name);
    if (!spec.is_object()) throw ConfigError(fmt::format("route '{}' must be an object", name));
    ModelRoute &r = routes_.at(role);
    if (spec.contains("model")) r.model_id = spec["model"].get<std::string>();
    if (spec.contains("temperature")) {
      const double t = spec["temperature"].get<double>();
      if (t < 0.0 || t > 1.0) throw ConfigError(fmt::format("route '{}': temperature out of [0,1]", name));
      r.temperature = t;
    }
    if (spec.contains("max_output_tokens")) {
      const int m = spec["max_output_tokens"].get<int>();
      if (m <= 0) throw ConfigError(fmt::format("route '{}': max_output_tokens must be positive", name));
      r.max_output_tokens = m;
    }
    if (spec.contains("supports_vision")) r.supports_vision = spec["supports_vision"].get<bool>();
  }
}

const ModelRoute &RoutingTable::route_for(Role role) const {
  const auto it = routes_.find(role);
  if (it == routes_.end()) throw UnknownRole(fmt::format("no route for role '{}'", to_string(role)));
  return it->second;
}

json canonical_request(const ModelRoute &route, const std::vector<Message> &messages) {
  json req;
  req["route"] = {{"role", std::string(to_string(route.role))},
                  {"model", route.model_id},
                  {"temperature", route.temperature},
                  {"max_output_tokens", route.max_output_tokens}};
  json msgs = json::array();
  for (const auto &m : messages) {
    json jm = {{"role", m.role}, {"content", collapse_whitespace(m.content)}};
    if (m.image) {
      jm["image_sha256"] = sha256_hex(m.image->bytes);
      jm["image_mime"] = m.image->mime_type;
    }
    msgs.push_back(std::move(jm));
  }
  req["messages"] = std::move(msgs);
  return req;
}

std::string request_digest(const ModelRoute &route, const std::vector<Message> &messages) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  return sha256_hex(canonical_request(route, messages).dump());
}

json exchange_to_json(const Exchange &e) {
  return json{{"role", std::string(to_string(e.role))},
              {"request_digest", e.request_digest},
              {"request", e.request},
              {"response", e.response},
              {"latency_ms", e.latency.count()}};
}

Exchange exchange_from_json(const json &j) {
  Exchange e;
  e.role = role_from_string(j.at("role").get<std::string>());
  e.request_digest = j.at("request_digest").get<std::string>();
  e.request = j.value("request", json::object());
  e.response = j.at("response").get<std::string>();
  e.latency = std::chrono::milliseconds{j.value("latency_ms", 0)};
  return e;
}

OpenAiTransport::OpenAiTransport(HttpClient &http, std::string base_url, std::string api_key)
    : http_(http), base_url_(std::move(base_url)), api_key_(std::move(api_key)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string OpenAiTransport::complete(const ModelRoute &route,
                                      const std::vector<Message> &messages) {
  json body;
  body["model"] = route.model_id;
  body["temperature"] = route.temperature;
  body["max_completion_tokens"] = route.max_output_tokens;
  json msgs = json::array();
  for (const auto &m : messages) {
    if (m.image) {
      msgs.push_back(
          {{"role", m.role},
           {"content",
            json::array({{{"type", "text"}, {"text", m.content}},
                         {{"type", "image_url"},
                          {"image_url",
                           {{"url", fmt::format("data:{};base64,{}", m.image->mime_type,
                                                base64_encode(m.image->bytes))}}}}})}});
    } else {
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
  }
  body["messages"] = std::move(msgs);

  HttpRequest req;
  req.method = "POST";
  req.url = base_url_ + "/chat/completions";
  req.headers = {{"Content-Type", "application/json"},
                 {"Authorization", "Bearer " + api_key_}};
  req.body = body.dump();

  HttpResponse resp;
  try {
    resp = http_.send(req);
  } catch (const NetworkFailure &e) {
    throw TransportError(e.what(), true);
  }
  if (resp.status == 429 || resp.status >= 500) {
    throw TransportError(fmt::format("LLM endpoint returned HTTP {}", resp.status), true);
  }
  if (resp.status < 200 || resp.status >= 300) {
    throw TransportError(fmt::format("LLM endpoint returned HTTP {}: {}", resp.status,
                                     utf8_prefix(resp.body, 300)),
                         false);
  }
  try {
    const json doc = json::parse(resp.body);
    const auto &content = doc.at("choices").at(0).at("message").at("content");
    return content.is_string() ? content.get<std::string>() : std::string{};
  } catch (const json::exception &e) {
    throw TransportError(fmt::format("unexpected completion payload: {}", e.what()), false);
  }
}

std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
    case GatewayMode::stub: return "stub";
  }
  return "live";
}

std::optional<GatewayMode> gateway_mode_from_string(std::string_view name) {
  for (GatewayMode m : {GatewayMode::live, GatewayMode::record, GatewayMode::replay,
                        GatewayMode::stub}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

struct LlmGateway::State {
  GatewayMode mode = GatewayMode::stub;
  RoutingTable routes;
  LlmTransport *transport = nullptr;
  RetryPolicy retry;

  std::map<std::string, std::string> replay;
  std::ofstream record_out;

  mutable std::mutex mu;
  std::map<Role, std::deque<StubItem>> queues;
  std::map<Role, std::string> repeat;
  Responder responder;
  std::set<Role> injected;
  std::map<Role, std::size_t> calls;
  std::size_t transport_calls = 0;
};

LlmGateway::LlmGateway(std::unique_ptr<State> state) : s_(std::move(state)) {}
LlmGateway::LlmGateway(LlmGateway &&) noexcept = default;
LlmGateway &LlmGateway::operator=(LlmGateway &&) noexcept = default;
LlmGateway::~LlmGateway() = default;

LlmGateway LlmGateway::live(RoutingTable routes, LlmTransport &transport, RetryPolicy retry) {
  auto s = std::make_unique<State>();
  s->mode = GatewayMode::live;
  s->routes = std::move(routes);
  s->transport = &transport;
  s->retry = retry;
  return LlmGateway(std::move(s));
}

LlmGateway LlmGateway::record(RoutingTable routes, LlmTransport &transport,
                              const std::string &exchange_path, RetryPolicy retry) {
  auto s = std::make_unique<State>();
  s->mode = GatewayMode::record;
  s->routes = std::move(routes);
  s->transport = &transport;
  s->retry = retry;
  const std::filesystem::path p(exchange_path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  s->record_out.open(exchange_path, std::ios::app);
  if (!s->record_out) throw ConfigError(fmt::format("cannot open exchange file '{}'", exchange_path));
  return LlmGateway(std::move(s));
}

LlmGateway LlmGateway::replay(RoutingTable routes, const std::string &exchange_path) {
  std::ifstream in(exchange_path);
  if (!in) throw ConfigError(fmt::format("replay needs an exchange file; cannot read '{}'", exchange_path));
  auto s = std::make_unique<State>();
  s->mode = GatewayMode::replay;
  s->routes = std::move(routes);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const Exchange e = exchange_from_json(json::parse(line));
      s->replay.emplace(e.request_digest, e.response);
    } catch (const std::exception &e) {
      throw ConfigError(fmt::format("{}:{}: bad exchange record: {}", exchange_path, lineno, e.what()));
    }
  }
  return LlmGateway(std::move(s));
}

LlmGateway LlmGateway::stub(RoutingTable routes) {
  auto s = std::make_unique<State>();
  s->mode = GatewayMode::stub;
  s->routes = std::move(routes);
  return LlmGateway(std::move(s));
}

LlmGateway LlmGateway::stub_from_script(RoutingTable routes, const std::string &script_path) {
  json doc;
  try {
    doc = json::parse(read_file(script_path));
  } catch (const std::exception &e) {
    throw ConfigError(fmt::format("cannot load stub script '{}': {}", script_path, e.what()));
  }
  if (!doc.is_object()) throw ConfigError("stub script must be an object keyed by role");
  LlmGateway g = stub(std::move(routes));
  for (const auto &[name, spec] : doc.items()) {
    const Role role = role_from_string(name);
    const json *queue = &spec;
    if (spec.is_object()) {
      if (spec.contains("repeat")) g.s_->repeat[role] = spec["repeat"].get<std::string>();
      queue = spec.contains("queue") ? &spec["queue"] : nullptr;
    }
    if (queue == nullptr) continue;
    if (!queue->is_array()) throw ConfigError(fmt::format("stub queue for '{}' must be a list", name));
    for (const auto &item : *queue) g.s_->queues[role].push_back(stub_item_from_json(item));
  }
  return g;
}

std::string LlmGateway::complete(Role role, const std::vector<Message> &messages) {
  const ModelRoute &route = s_->routes.route_for(role);
  {
    std::lock_guard lock(s_->mu);
    ++s_->calls[role];
    if (s_->injected.contains(role)) {
      throw GatewayFailure(fmt::format("injected failure for role '{}'", to_string(role)));
    }
  }
  for (const auto &m : messages) {
    if (m.image && !route.supports_vision) {
      throw UnsupportedPayload(fmt::format("role '{}' does not accept images", to_string(role)));
    }
  }

  switch (s_->mode) {
    case GatewayMode::stub: {
      Responder responder;
      {
        std::lock_guard lock(s_->mu);
        auto &q = s_->queues[role];
        if (!q.empty()) {
          StubItem item = std::move(q.front());
          q.pop_front();
          if (item.fail) throw GatewayFailure(item.text);
          return item.text;
        }
        if (const auto it = s_->repeat.find(role); it != s_->repeat.end()) return it->second;
        responder = s_->responder;
      }
      if (responder) return responder(role, messages);
      throw StubExhausted(fmt::format("no scripted reply left for role '{}'", to_string(role)));
    }
    case GatewayMode::replay: {
      const std::string digest = request_digest(route, messages);
      const auto it = s_->replay.find(digest);
      if (it == s_->replay.end()) {
        throw ReplayMiss(fmt::format("no recorded exchange for role '{}' digest {}",
                                     to_string(role), digest));
      }
      return it->second;
    }
    case GatewayMode::live:
    case GatewayMode::record:
      break;
  }

  const int attempts = std::max(1, s_->retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    {
      std::lock_guard lock(s_->mu);
      ++s_->transport_calls;
    }
    const auto started = std::chrono::steady_clock::now();
    try {
      std::string reply = s_->transport->complete(route, messages);
      if (s_->mode == GatewayMode::record) {
        Exchange e;
        e.role = role;
        e.request = canonical_request(route, messages);
        e.request_digest = sha256_hex(e.request.dump());
        e.response = reply;
        e.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        std::lock_guard lock(s_->mu);
        s_->record_out << exchange_to_json(e).dump() << '\n';
        s_->record_out.flush();
      }
      return reply;
    } catch (const TransportError &e) {
      if (!e.transient() || attempt >= attempts) {
        throw GatewayFailure(fmt::format("role '{}' failed after {} attempt(s): {}",
                                         to_string(role), attempt, e.what()));
      }
      spdlog::debug("transient LLM failure ({}), retrying", e.what());
    } catch (const NetworkFailure &e) {
      if (attempt >= attempts) {
        throw GatewayFailure(fmt::format("role '{}' failed after {} attempt(s): {}",
                                         to_string(role), attempt, e.what()));
      }
    }
    std::this_thread::sleep_for(s_->retry.base_delay * (1 << (attempt - 1)));
  }
}

std::string LlmGateway::complete_vision(Role role, std::string_view image_bytes,
                                        std::string_view mime_type, std::string_view prompt) {
  const ModelRoute &route = s_->routes.route_for(role);
  if (!route.supports_vision) {
    throw UnsupportedPayload(fmt::format("role '{}' does not accept images", to_string(role)));
  }
  std::vector<Message> messages;
  messages.push_back(Message{"user", std::string(prompt),
                             ImagePayload{std::string(image_bytes), std::string(mime_type)}});
  return complete(role, messages);
}

const ModelRoute &LlmGateway::route_for(Role role) const { return s_->routes.route_for(role); }
GatewayMode LlmGateway::mode() const { return s_->mode; }

void LlmGateway::script(Role role, std::vector<std::string> replies) {
  std::lock_guard lock(s_->mu);
  for (auto &r : replies) s_->queues[role].push_back({std::move(r), false});
}

void LlmGateway::script_failure(Role role, std::string reason) {
  std::lock_guard lock(s_->mu);
  s_->queues[role].push_back({std::move(reason), true});
}

void LlmGateway::set_responder(Responder responder) {
  std::lock_guard lock(s_->mu);
  s_->responder = std::move(responder);
}

void LlmGateway::inject_failure(Role role, bool enabled) {
  std::lock_guard lock(s_->mu);
  if (enabled) {
    s_->injected.insert(role);
  } else {
    s_->injected.erase(role);
  }
}

bool LlmGateway::order_sensitive() const {
  std::lock_guard lock(s_->mu);
  if (s_->mode != GatewayMode::stub) return false;
  for (const auto &[role, q] : s_->queues) {
    if (!q.empty()) return true;
  }
  return false;
}

std::size_t LlmGateway::calls(Role role) const {
  std::lock_guard lock(s_->mu);
  const auto it = s_->calls.find(role);
  return it == s_->calls.end() ? 0 : it->second;
}

std::size_t LlmGateway::total_calls() const {
  std::lock_guard lock(s_->mu);
  std::size_t n = 0;
  for (const auto &[r, c] : s_->calls) n += c;
  return n;
}

std::size_t LlmGateway::transport_calls() const {
  std::lock_guard lock(s_->mu);
  return s_->transport_calls;
}

std::map<Role, std::size_t> LlmGateway::call_counts() const {
  std::lock_guard lock(s_->mu);
  return s_->calls;
}

std::optional<json> extract_json_value(std::string_view reply) {
  for (std::size_t start = 0; start < reply.size(); ++start) {
    const char open = reply[start];
    if (open != '{' && open != '[') continue;
    // Find the matching close bracket, skipping string contents.
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < reply.size(); ++i) {
      const char c = reply[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{' || c == '[') {
        ++depth;
      } else if (c == '}' || c == ']') {
        if (--depth == 0) {
          try {
            return json::parse(reply.substr(start, i - start + 1));
          } catch (const json::parse_error &) {
          }
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace issuetraj
