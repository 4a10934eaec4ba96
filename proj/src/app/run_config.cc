#include "ctformer/app/run_config.h"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctformer/data/cohort_io.h"
#include "ctformer/pipeline/checkpoint.h"

namespace ctformer::app {

using nlohmann::json;

namespace {

json model_section(const pipeline::ModelConfig& m) {
  json j = pipeline::to_json(m);
  j.erase("n_features");
  j.erase("t_max");
  return j;
}

json run_section(const RunConfig& c) {
  return json{{"seeds", c.seeds}, {"explain_limit", c.explain_limit}};
}

}  // namespace

pipeline::ExperimentConfig RunConfig::experiment() const {
  return pipeline::ExperimentConfig{data, pipeline::model_for_data(model, data), train};
}

json to_json(const RunConfig& c) {
  return json{{"data", data::to_json(c.data)},
              {"model", model_section(c.model)},
              {"train", pipeline::to_json(c.train)},
              {"attribution", attribution::to_json(c.attribution)},
              {"run", run_section(c)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw std::runtime_error("run config must be a JSON object");
  static const std::set<std::string> sections{"data", "model", "train", "attribution", "run"};
  for (const auto& item : j.items()) {
    if (!sections.contains(item.key())) {
      throw std::runtime_error("run config: unknown section '" + item.key() + "'");
    }
  }
  const json empty = json::object();
  RunConfig c;
  c.data = data::synthetic_config_from_json(j.value("data", empty));
  data::validate(c.data);
  const json model = j.value("model", empty);
  if (model.contains("n_features") || model.contains("t_max")) {
    throw std::runtime_error("run config: model.n_features and model.t_max follow data; set data.* instead");
  }
  c.model = pipeline::model_for_data(pipeline::model_config_from_json(model), c.data);
  c.train = pipeline::train_config_from_json(j.value("train", empty));
  c.attribution = attribution::attribution_config_from_json(j.value("attribution", empty));
  const json run = j.value("run", empty);
  for (const auto& item : run.items()) {
    if (item.key() != "seeds" && item.key() != "explain_limit") {
      throw std::runtime_error("run config: unknown key 'run." + item.key() + "'");
    }
  }
  c.seeds = run.value("seeds", c.seeds);
  c.explain_limit = run.value("explain_limit", c.explain_limit);
  if (c.model.hidden_dim == 0 || c.model.n_heads == 0 || c.model.hidden_dim % c.model.n_heads != 0) {
    throw std::runtime_error("run config: model.hidden_dim must be a positive multiple of model.n_heads");
  }
  return c;
}

json apply_override(json config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::runtime_error("override '" + assignment + "' is not of the form section.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const auto dot = key.find('.');
  if (dot == std::string::npos || key.find('.', dot + 1) != std::string::npos) {
    throw std::runtime_error("override key '" + key + "' must be section.key");
  }
  const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
  if (!config.contains(section) || !config[section].contains(name)) {
    throw std::runtime_error("override: unknown key '" + key + "'");
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  config[section][name] = value;
  return config;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  json merged = to_json(RunConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) throw std::runtime_error("config " + path + " is not valid JSON");
    // Validate the file on its own so unknown keys are reported against it.
    run_config_from_json(file);
    for (const auto& section : file.items()) {
      for (const auto& item : section.value().items()) merged[section.key()][item.key()] = item.value();
    }
  }
  for (const std::string& o : overrides) merged = apply_override(std::move(merged), o);
  return run_config_from_json(merged);
}

}  // namespace ctformer::app
