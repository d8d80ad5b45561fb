// Python bindings: pure helpers plus an offline extract entry point.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "issuetraj/error.hpp"
#include "issuetraj/label_router.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/markdown.hpp"
#include "issuetraj/pipeline.hpp"
#include "issuetraj/quality_judge.hpp"
#include "issuetraj/thread_model.hpp"
#include "issuetraj/trajectory.hpp"
#include "issuetraj/url.hpp"

namespace py = pybind11;
using namespace issuetraj;

namespace {

LabelType label_arg(const std::string &name) {
  const auto l = label_from_string(name);
  if (!l) throw py::value_error("unknown label '" + name + "'");
  return *l;
}

std::string aggregate_json(const std::vector<std::string> &categories, const std::string &split) {
  std::vector<VerdictCategory> cats;
  for (const auto &c : categories) {
    const auto v = category_from_string(c);
    if (!v) throw py::value_error("unknown category '" + c + "'");
    cats.push_back(*v);
  }
  return split_stats_to_json(aggregate_categories(cats, split)).dump();
}

std::string category_of(const std::map<std::string, int> &scores) {
  std::map<Criterion, int> s;
  for (const auto &[name, v] : scores) {
    const auto c = criterion_from_string(name);
    if (!c) throw py::value_error("unknown criterion '" + name + "'");
    s[*c] = v;
  }
  return std::string(to_string(category_for_scores(s)));
}

std::string extract_json(const std::vector<std::string> &inputs, const std::string &output_dir,
                         const std::string &stub_script, const std::string &cache_path,
                         bool stable_output, std::int64_t parallelism) {
  RunConfig config;
  config.inputs = inputs;
  config.output_dir = output_dir;
  config.cache_path = cache_path;
  config.gateway_mode = GatewayMode::stub;
  config.stub_script_path = stub_script;
  config.stable_output = stable_output;
  config.parallelism = parallelism;
  RunReport report;
  {
    py::gil_scoped_release release;
    config.validate_for_extract();
    ServiceBundle bundle(config);
    auto services = bundle.services();
    report = cmd_extract(config, services);
  }
  return report.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "issuetraj native core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<MalformedInput>(m, "MalformedInput", base.ptr());
  py::register_exception<InvalidUrl>(m, "InvalidUrl", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EmptyInput>(m, "EmptyInput", base.ptr());

  m.def("labels", [] {
    std::vector<std::string> out;
    for (LabelType l : all_labels()) out.emplace_back(to_string(l));
    return out;
  });
  m.def("schema_for", [](const std::string &label) { return schema_for(label_arg(label)).field_keys; },
        py::arg("label"));
  m.def("match_labels", [](const std::vector<std::string> &repo_labels) -> std::optional<std::string> {
    if (const auto l = match_labels_by_keyword(repo_labels)) return std::string(to_string(*l));
    return std::nullopt;
  }, py::arg("repo_labels"));

  m.def("normalize_url", [](const std::string &url) { return normalize_url(url); }, py::arg("url"));
  m.def("classify_url", [](const std::string &url) { return std::string(to_string(classify_url(normalize_url(url)))); },
        py::arg("url"));
  m.def("extract_urls", [](const std::string &body) {
    std::vector<std::string> out;
    for (const auto &u : extract_urls(body)) out.push_back(u.raw_url);
    return out;
  }, py::arg("body"));

  m.def("canonical_thread", [](const std::string &text) { return serialize_thread(parse_thread(text)); },
        py::arg("text"));
  m.def("thread_filename", &thread_filename, py::arg("issue_number"), py::arg("pr_number"));

  m.def("percent", [](std::int64_t count, std::int64_t total) { return percent_of(count, total).str(); },
        py::arg("count"), py::arg("total"));
  m.def("category_for_scores", &category_of, py::arg("scores"));
  m.def("_aggregate_json", &aggregate_json, py::arg("categories"), py::arg("split"));

  m.def("validate_trajectory", [](const std::string &text) {
    return validate_trajectory_json(nlohmann::json::parse(text));
  }, py::arg("text"));

  m.def("_extract_json", &extract_json, py::arg("inputs"), py::arg("output_dir"), py::arg("stub_script"),
        py::arg("cache_path") = "", py::arg("stable_output") = true, py::arg("parallelism") = 1);
}
