#include "issuetraj/trajectory.hpp"

#include <algorithm>
#include <array>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/thread_model.hpp"
#include "prompts.hpp"

namespace issuetraj {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 9> kTopLevelKeys = {
    "title",           "labels",           "label_type",    "label_detection", "field_schema",
    "link_cache",      "comment_analyses", "field_buckets", "trajectory"};

std::string render_excerpts(const std::vector<Excerpt> &ranked) {
  std::string out;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Excerpt &e = ranked[i];
    out += fmt::format("{}. [comment {} by @{} ({}), reactions {}] {}\n", i + 1, e.comment_id,
                       e.author_login, e.association.empty() ? "none" : e.association,
                       e.reaction_score, e.text);
  }
  return trim(out);
}

ordered_json analysis_to_json(const CommentAnalysis &a) {
  ordered_json j;
  j["comment_id"] = a.comment_id;
  j["analysis_text"] = a.analysis_text;
  j["referenced_urls"] = a.referenced_urls;
  j["snippets_considered"] = a.snippets_considered;
  j["failed"] = a.failed;
  return j;
}

bool is_nonneg_int(const json &j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

}  // namespace

const std::optional<std::string> &Trajectory::field(const std::string &key) const {
  for (const auto &f : synthesized) {
    if (f.field_key == key) return f.paragraph;
  }
  throw ForeignFieldKey(fmt::format("'{}' is not a field of this trajectory", key));
}

bool is_maintainer_tier(std::string_view association) {
  const std::string a = to_lower(trim(association));
  return a == "owner" || a == "member" || a == "collaborator";
}

std::vector<Excerpt> rank_evidence(const std::vector<Excerpt> &bucket) {
  std::vector<Excerpt> ranked = bucket;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Excerpt &a, const Excerpt &b) {
    const bool ma = is_maintainer_tier(a.association);
    const bool mb = is_maintainer_tier(b.association);
    if (ma != mb) return ma;
    return a.reaction_score > b.reaction_score;
  });
  return ranked;
}

std::string_view to_string(FieldOutcome outcome) {
  switch (outcome) {
    case FieldOutcome::synthesized: return "synthesized";
    case FieldOutcome::empty_bucket: return "empty_bucket";
    case FieldOutcome::no_evidence: return "no_evidence";
    case FieldOutcome::failed: return "failed";
  }
  return "failed";
}

FieldResult synthesize_field(const std::string &field_key, std::string_view guidance,
                             const std::vector<Excerpt> &ranked, std::string_view issue_title,
                             LlmGateway &gateway) {
  if (ranked.empty()) return {std::nullopt, FieldOutcome::empty_bucket};
  const auto messages = prompts::render(
      "trajectory_synthesizer", {{"issue_title", std::string(issue_title)},
                                 {"field_key", field_key},
                                 {"field_guidance", std::string(guidance)},
                                 {"excerpts", render_excerpts(ranked)},
                                 {"sentinel", std::string(kNoEvidenceSentinel)}});
  std::string reply;
  try {
    reply = trim(gateway.complete(Role::trajectory_synthesizer, messages));
  } catch (const GatewayFailure &e) {
    spdlog::warn("synthesis of '{}' failed: {}", field_key, e.what());
    return {std::nullopt, FieldOutcome::failed};
  }
  if (reply == kNoEvidenceSentinel) return {std::nullopt, FieldOutcome::no_evidence};
  if (reply.empty()) {
    spdlog::warn("synthesis of '{}' returned nothing", field_key);
    return {std::nullopt, FieldOutcome::failed};
  }
  return {std::move(reply), FieldOutcome::synthesized};
}

SynthesisOutput synthesize_trajectory(const IssueThread &thread,
                                      const std::vector<std::string> &repo_labels,
                                      const LabelDecision &label, const FieldSchema &schema,
                                      const LinkCache &cache,
                                      const std::vector<CommentAnalysis> &analyses,
                                      const FieldBuckets &buckets, LlmGateway &gateway) {
  SynthesisOutput out;
  Trajectory &t = out.trajectory;
  t.issue_title = issue_title(thread);
  t.labels = repo_labels;
  t.label_type = label.label;
  t.label_detection = label.method;
  t.field_schema = schema.field_keys;
  t.comment_analyses = analyses;
  t.field_buckets = buckets;

  std::set<std::string> seen;
  for (const auto &a : analyses) {
    for (const auto &url : a.referenced_urls) {
      if (!seen.insert(url).second) continue;
      if (auto entry = cache.find(url)) t.link_cache.emplace_back(url, std::move(*entry));
    }
  }

  for (const auto &key : schema.field_keys) {
    const FieldResult r = synthesize_field(key, schema.description(key),
                                           rank_evidence(buckets.at(key)), t.issue_title, gateway);
    if (r.outcome == FieldOutcome::failed) out.diagnostics.push_back("synthesis_failed:" + key);
    t.synthesized.push_back(SynthesizedField{key, r.paragraph});
  }
  return out;
}

std::string trajectory_filename(std::int64_t issue_number) {
  return fmt::format("{}_issue_trajectory.json", issue_number);
}

ordered_json trajectory_to_json(const Trajectory &t) {
  ordered_json j;
  j["title"] = t.issue_title;
  j["labels"] = t.labels;
  j["label_type"] = std::string(to_string(t.label_type));
  j["label_detection"] = std::string(to_string(t.label_detection));
  j["field_schema"] = t.field_schema;
  ordered_json cache = ordered_json::object();
  for (const auto &[url, entry] : t.link_cache) cache[url] = cache_entry_to_json(entry);
  j["link_cache"] = std::move(cache);
  ordered_json analyses = ordered_json::array();
  for (const auto &a : t.comment_analyses) analyses.push_back(analysis_to_json(a));
  j["comment_analyses"] = std::move(analyses);
  ordered_json buckets = ordered_json::object();
  for (const auto &b : t.field_buckets.buckets()) {
    ordered_json list = ordered_json::array();
    for (const auto &e : b.excerpts) list.push_back(excerpt_to_json(e));
    buckets[b.field_key] = std::move(list);
  }
  j["field_buckets"] = std::move(buckets);
  ordered_json synthesized = ordered_json::object();
  for (const auto &f : t.synthesized) {
    synthesized[f.field_key] = f.paragraph ? ordered_json(*f.paragraph) : ordered_json(nullptr);
  }
  j["trajectory"] = std::move(synthesized);
  return j;
}

std::string serialize_trajectory(const Trajectory &t) { return trajectory_to_json(t).dump(2) + "\n"; }

std::vector<std::string> validate_trajectory_json(const json &doc) {
  std::vector<std::string> v;
  if (!doc.is_object()) return {"document is not an object"};
  for (const auto key : kTopLevelKeys) {
    if (!doc.contains(key)) v.push_back(fmt::format("missing key '{}'", key));
  }
  for (const auto &[key, value] : doc.items()) {
    if (std::find(kTopLevelKeys.begin(), kTopLevelKeys.end(), key) == kTopLevelKeys.end()) {
      v.push_back(fmt::format("unexpected key '{}'", key));
    }
  }
  if (!v.empty()) return v;

  if (!doc["title"].is_string()) v.push_back("title must be a string");
  if (!doc["labels"].is_array() ||
      !std::all_of(doc["labels"].begin(), doc["labels"].end(), [](const json &l) { return l.is_string(); })) {
    v.push_back("labels must be a list of strings");
  }
  std::optional<LabelType> label;
  if (doc["label_type"].is_string()) label = label_from_string(doc["label_type"].get<std::string>());
  if (!label) v.push_back("label_type is not a known label");
  if (!doc["label_detection"].is_string() ||
      !detection_from_string(doc["label_detection"].get<std::string>())) {
    v.push_back("label_detection must be keyword_match or llm_classified");
  }

  std::vector<std::string> keys;
  if (!doc["field_schema"].is_array()) {
    v.push_back("field_schema must be a list");
  } else {
    for (const auto &k : doc["field_schema"]) {
      if (!k.is_string()) {
        v.push_back("field_schema entries must be strings");
        break;
      }
      keys.push_back(k.get<std::string>());
    }
    if (label && keys != schema_for(*label).field_keys) {
      v.push_back("field_schema does not match the schema of label_type");
    }
  }

  if (!doc["link_cache"].is_object()) {
    v.push_back("link_cache must be an object");
  } else {
    for (const auto &[url, entry] : doc["link_cache"].items()) {
      try {
        cache_entry_from_json(entry);
        if (!entry.contains("summary") || !entry["summary"].is_string() ||
            !entry.contains("fetched_at") || !entry.contains("kind")) {
          v.push_back(fmt::format("link_cache['{}'] is incomplete", url));
        }
      } catch (const Error &e) {
        v.push_back(fmt::format("link_cache['{}']: {}", url, e.what()));
      }
    }
  }

  if (!doc["comment_analyses"].is_array()) {
    v.push_back("comment_analyses must be a list");
  } else {
    for (const auto &a : doc["comment_analyses"]) {
      const bool ok = a.is_object() && a.contains("comment_id") && a["comment_id"].is_string() &&
                      a.contains("analysis_text") && a["analysis_text"].is_string() &&
                      a.contains("referenced_urls") && a["referenced_urls"].is_array() &&
                      a.contains("snippets_considered") && is_nonneg_int(a["snippets_considered"]) &&
                      a.contains("failed") && a["failed"].is_boolean();
      if (!ok) {
        v.push_back("comment_analyses entries need comment_id, analysis_text, referenced_urls, "
                    "snippets_considered and failed");
        break;
      }
    }
  }

  const json &buckets = doc["field_buckets"];
  const json &synth = doc["trajectory"];
  if (!buckets.is_object()) v.push_back("field_buckets must be an object");
  if (!synth.is_object()) v.push_back("trajectory must be an object");
  if (!v.empty()) return v;

  const std::set<std::string> key_set(keys.begin(), keys.end());
  std::set<std::string> bucket_keys, synth_keys;
  for (const auto &[k, list] : buckets.items()) {
    bucket_keys.insert(k);
    if (!list.is_array()) {
      v.push_back(fmt::format("field_buckets['{}'] must be a list", k));
      continue;
    }
    for (const auto &e : list) {
      const bool ok = e.is_object() && e.contains("text") && e["text"].is_string() &&
                      !trim(e["text"].get<std::string>()).empty() && e.contains("comment_id") &&
                      e["comment_id"].is_string() && e.contains("author_login") &&
                      e["author_login"].is_string() && e.contains("association") &&
                      e["association"].is_string() && e.contains("reaction_score") &&
                      is_nonneg_int(e["reaction_score"]);
      if (!ok) v.push_back(fmt::format("field_buckets['{}'] has a malformed excerpt", k));
    }
  }
  for (const auto &[k, value] : synth.items()) {
    synth_keys.insert(k);
    if (value.is_null()) continue;
    if (!value.is_string() || trim(value.get<std::string>()).empty()) {
      v.push_back(fmt::format("trajectory['{}'] must be null or a non-empty string", k));
    }
    if (buckets.contains(k) && buckets[k].is_array() && buckets[k].empty()) {
      v.push_back(fmt::format("trajectory['{}'] is set but its bucket is empty", k));
    }
  }
  if (bucket_keys != key_set) v.push_back("field_buckets keys differ from field_schema");
  if (synth_keys != key_set) v.push_back("trajectory keys differ from field_schema");
  return v;
}

Trajectory parse_trajectory(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::parse_error &e) {
    throw MalformedInput(fmt::format("trajectory is not valid JSON: {}", e.what()));
  }
  const auto violations = validate_trajectory_json(json::parse(text));
  if (!violations.empty()) {
    std::string msg = "invalid trajectory:";
    for (const auto &x : violations) msg += "\n  " + x;
    throw MalformedInput(msg);
  }

  Trajectory t;
  t.issue_title = doc["title"].get<std::string>();
  t.labels = doc["labels"].get<std::vector<std::string>>();
  t.label_type = *label_from_string(doc["label_type"].get<std::string>());
  t.label_detection = *detection_from_string(doc["label_detection"].get<std::string>());
  t.field_schema = doc["field_schema"].get<std::vector<std::string>>();
  for (const auto &[url, entry] : doc["link_cache"].items()) {
    t.link_cache.emplace_back(url, cache_entry_from_json(json::parse(entry.dump())));
  }
  for (const auto &a : doc["comment_analyses"]) {
    CommentAnalysis ca;
    ca.comment_id = a["comment_id"].get<std::string>();
    ca.analysis_text = a["analysis_text"].get<std::string>();
    ca.referenced_urls = a["referenced_urls"].get<std::vector<std::string>>();
    ca.snippets_considered = a["snippets_considered"].get<std::size_t>();
    ca.failed = a["failed"].get<bool>();
    t.comment_analyses.push_back(std::move(ca));
  }
  const FieldSchema &schema = schema_for(t.label_type);
  t.field_buckets = FieldBuckets(schema);
  for (const auto &key : schema.field_keys) {
    for (const auto &e : doc["field_buckets"][key]) {
      t.field_buckets.append(excerpt_from_json(key, json::parse(e.dump())));
    }
    const auto &value = doc["trajectory"][key];
    t.synthesized.push_back(SynthesizedField{
        key, value.is_null() ? std::nullopt : std::optional<std::string>(value.get<std::string>())});
  }
  return t;
}

}  // namespace issuetraj
