#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "issuetraj/error.hpp"

namespace issuetraj {

class HttpClient;

enum class Role {
  label_classifier,
  field_bucket_classifier,
  comment_analyst,
  link_summarizer,
  vision_describer,
  trajectory_synthesizer,
  quality_judge,
};

std::string_view to_string(Role role);
/// Throws UnknownRole.
Role role_from_string(std::string_view name);
const std::vector<Role> &all_roles();

struct ModelRoute {
  Role role = Role::label_classifier;
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 1;
  bool supports_vision = false;

  bool operator==(const ModelRoute &) const = default;
};

class RoutingTable {
 public:
  /// Deterministic classifiers at temperature 0.0 with 128/256 tokens,
  /// generative roles at 0.2 with 4096, judge at 0.0 with 4096.
  static RoutingTable defaults();

  /// Apply `{"label_classifier": {"model": ..., "temperature": ...,
  /// "max_output_tokens": ...}, ...}`. Throws UnknownRole or ConfigError.
  void apply_overrides(const nlohmann::json &routes);

  const ModelRoute &route_for(Role role) const;

 private:
  std::map<Role, ModelRoute> routes_;
};

struct ImagePayload {
  std::string bytes;
  std::string mime_type;
};

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
  std::optional<ImagePayload> image;
};

/// Content hash over canonicalized messages plus route parameters. Keys are
/// sorted, message whitespace is collapsed, images enter by their SHA-256.
std::string request_digest(const ModelRoute &route,
                           const std::vector<Message> &messages);

/// Canonical JSON form of a request, as hashed by request_digest.
nlohmann::json canonical_request(const ModelRoute &route,
                                 const std::vector<Message> &messages);

struct Exchange {
  Role role = Role::label_classifier;
  std::string request_digest;
  nlohmann::json request;
  std::string response;
  std::chrono::milliseconds latency{0};
};

nlohmann::json exchange_to_json(const Exchange &exchange);
Exchange exchange_from_json(const nlohmann::json &j);

/// Raised by transports. Transient failures are retried by the gateway.
class TransportError : public Error {
 public:
  TransportError(const std::string &what, bool transient)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class LlmTransport {
 public:
  virtual ~LlmTransport() = default;
  virtual std::string complete(const ModelRoute &route,
                               const std::vector<Message> &messages) = 0;
};

/// OpenAI-compatible `/chat/completions` transport.
class OpenAiTransport final : public LlmTransport {
 public:
  OpenAiTransport(HttpClient &http, std::string base_url, std::string api_key);

  std::string complete(const ModelRoute &route,
                       const std::vector<Message> &messages) override;

 private:
  HttpClient &http_;
  std::string base_url_;
  std::string api_key_;
};

enum class GatewayMode { live, record, replay, stub };

std::string_view to_string(GatewayMode mode);
std::optional<GatewayMode> gateway_mode_from_string(std::string_view name);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
};

/// Computes a response from the request; used by stubs that need to react
/// to prompt content.
using Responder = std::function<std::string(Role, const std::vector<Message> &)>;

/// Provider-agnostic completion interface with per-role routing.
///
/// Stub mode serves per-role FIFO queues of scripted replies, then falls back
/// to a responder if one is installed; running dry raises StubExhausted.
/// The handle is shareable across threads.
class LlmGateway {
 public:
  static LlmGateway live(RoutingTable routes, LlmTransport &transport,
                         RetryPolicy retry = {});
  /// Live calls, with each exchange appended to `exchange_path` as JSON lines.
  static LlmGateway record(RoutingTable routes, LlmTransport &transport,
                           const std::string &exchange_path,
                           RetryPolicy retry = {});
  /// Throws ConfigError when the exchange file is missing or unreadable.
  static LlmGateway replay(RoutingTable routes, const std::string &exchange_path);
  static LlmGateway stub(RoutingTable routes = RoutingTable::defaults());

  /// Stub script file: `{"role": ["reply", {"fail": "why"}, ...]}` or
  /// `{"role": {"queue": [...], "repeat": "reply"}}`.
  static LlmGateway stub_from_script(RoutingTable routes,
                                     const std::string &script_path);

  LlmGateway(LlmGateway &&) noexcept;
  LlmGateway &operator=(LlmGateway &&) noexcept;
  ~LlmGateway();

  /// Throws GatewayFailure, ReplayMiss or StubExhausted.
  std::string complete(Role role, const std::vector<Message> &messages);

  /// Throws UnsupportedPayload when the role's route lacks vision.
  std::string complete_vision(Role role, std::string_view image_bytes,
                              std::string_view mime_type, std::string_view prompt);

  const ModelRoute &route_for(Role role) const;
  GatewayMode mode() const;

  void script(Role role, std::vector<std::string> replies);
  void script_failure(Role role, std::string reason = "scripted failure");
  void set_responder(Responder responder);
  /// Fail every call for `role` with GatewayFailure, in any mode.
  void inject_failure(Role role, bool enabled = true);

  /// True when results depend on call order (stub queues are non-empty).
  bool order_sensitive() const;

  std::size_t calls(Role role) const;
  std::size_t total_calls() const;
  /// Attempts handed to the transport (zero in replay and stub modes).
  std::size_t transport_calls() const;
  std::map<Role, std::size_t> call_counts() const;

 private:
  struct State;
  explicit LlmGateway(std::unique_ptr<State> state);
  std::unique_ptr<State> s_;
};

/// Parse the first JSON value found in a model reply, tolerating code fences
/// and leading prose.
std::optional<nlohmann::json> extract_json_value(std::string_view reply);

}  // namespace issuetraj
