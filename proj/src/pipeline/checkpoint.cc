#include "ctformer/pipeline/checkpoint.h"

#include <set>
#include <stdexcept>

namespace ctformer::pipeline {

using nlohmann::json;

namespace {

constexpr const char* kStageOneKind = "ctformer.stage1";
constexpr const char* kStageTwoKind = "ctformer.stage2";
constexpr const char* kTupleCacheKind = "ctformer.tuples";

NamedArray to_array(const std::string& name, const Tensor& t) {
  return NamedArray{name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}

Tensor from_array(const NamedArray& a) { return Tensor(a.shape, a.values); }

void require_kind(const Container& c, const char* kind) {
  if (c.kind != kind) {
    throw std::runtime_error("expected a '" + std::string(kind) + "' container, got '" + c.kind + "'");
  }
  if (c.metadata.value("checkpoint_schema_version", -1) != kCheckpointSchemaVersion) {
    throw std::runtime_error("container '" + c.kind + "': unsupported checkpoint schema");
  }
}

// Copies stored values into freshly initialized parameters, checking names
// and shapes.
void restore(const Container& c, const std::vector<nn::NamedTensor>& params) {
  if (c.arrays.size() != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(c.arrays.size()) +
                             " arrays, model expects " + std::to_string(params.size()));
  }
  for (const nn::NamedTensor& p : params) {
    const NamedArray& a = c.array(p.name);
    if (a.shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint array '" + p.name + "' has shape " +
                               grad::shape_to_string(a.shape) + ", model expects " +
                               grad::shape_to_string(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(a.values.begin(), a.values.end(), t.mutable_values().begin());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"n_features", c.n_features},     {"t_max", c.t_max},
              {"hidden_dim", c.hidden_dim},     {"backbone_dim", c.backbone_dim},
              {"cfc_layers", c.cfc_layers},     {"transformer_layers", c.transformer_layers},
              {"n_heads", c.n_heads},           {"ff_dim", c.ff_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> known{"n_features", "t_max",      "hidden_dim",
                                           "backbone_dim", "cfc_layers", "transformer_layers",
                                           "n_heads",    "ff_dim"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw std::runtime_error("model config: unknown key '" + item.key() + "'");
    }
  }
  ModelConfig c;
  c.n_features = j.value("n_features", c.n_features);
  c.t_max = j.value("t_max", c.t_max);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.backbone_dim = j.value("backbone_dim", c.backbone_dim);
  c.cfc_layers = j.value("cfc_layers", c.cfc_layers);
  c.transformer_layers = j.value("transformer_layers", c.transformer_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  return c;
}

Container stage_one_container(const StageOneModel& model, const json& training) {
  Container c;
  c.kind = kStageOneKind;
  const auto params = model.params();
  c.metadata = json{{"checkpoint_schema_version", kCheckpointSchemaVersion},
                    {"stage", 1},
                    {"variant", variant_name(model.variant)},
                    {"model", to_json(model.config)},
                    {"digest", parameter_digest(params)},
                    {"training", training}};
  for (const auto& p : params) c.arrays.push_back(to_array(p.name, p.tensor));
  return c;
}

StageOneModel stage_one_from_container(const Container& c) {
  require_kind(c, kStageOneKind);
  const ModelConfig config = model_config_from_json(c.metadata.at("model"));
  StageOneModel model =
      StageOneModel::init(config, parse_variant(c.metadata.at("variant").get<std::string>()), 0);
  restore(c, model.params());
  if (parameter_digest(model.params()) != c.metadata.at("digest").get<std::string>()) {
    throw std::runtime_error("stage-one checkpoint digest mismatch");
  }
  return model;
}

Container stage_two_container(const StageTwoModel& model, const ModelConfig& config,
                              const std::string& stage_one_digest, const json& training) {
  Container c;
  c.kind = kStageTwoKind;
  c.metadata = json{{"checkpoint_schema_version", kCheckpointSchemaVersion},
                    {"stage", 2},
                    {"variant", variant_name(model.variant)},
                    {"model", to_json(config)},
                    {"stage1_digest", stage_one_digest},
                    {"digest", parameter_digest(model.params())},
                    {"training", training}};
  // Every tensor is stored so the container round-trips regardless of which
  // subset the variant trains.
  c.arrays.push_back(to_array("causal.w_c", model.w_c));
  c.arrays.push_back(to_array("fusion.gate_w", model.fusion.gate_w));
  c.arrays.push_back(to_array("fusion.gate_b", model.fusion.gate_b));
  c.arrays.push_back(to_array("fusion.classifier.weight", model.fusion.classifier.weight));
  c.arrays.push_back(to_array("fusion.classifier.bias", model.fusion.classifier.bias));
  return c;
}

StageTwoModel stage_two_from_container(const Container& c) {
  require_kind(c, kStageTwoKind);
  const ModelConfig config = model_config_from_json(c.metadata.at("model"));
  StageTwoModel model = StageTwoModel::init(
      config.t_max, config.hidden_dim, parse_variant(c.metadata.at("variant").get<std::string>()), 0);
  restore(c, {{"causal.w_c", model.w_c},
              {"fusion.gate_w", model.fusion.gate_w},
              {"fusion.gate_b", model.fusion.gate_b},
              {"fusion.classifier.weight", model.fusion.classifier.weight},
              {"fusion.classifier.bias", model.fusion.classifier.bias}});
  if (parameter_digest(model.params()) != c.metadata.at("digest").get<std::string>()) {
    throw std::runtime_error("stage-two checkpoint digest mismatch");
  }
  return model;
}

Container tuple_cache_container(const TupleCache& cache) {
  Container c;
  c.kind = kTupleCacheKind;
  json patients = json::array();
  for (const StageTwoTuple& t : cache.tuples) {
    patients.push_back({{"patient_id", t.patient_id}, {"t_valid", t.t_valid}, {"label", t.label}});
    c.arrays.push_back(to_array(t.patient_id + "/h_cfc", t.h_cfc));
    c.arrays.push_back(to_array(t.patient_id + "/global", t.global));
    c.arrays.push_back(to_array(t.patient_id + "/attention", t.attention));
  }
  c.metadata = json{{"checkpoint_schema_version", kCheckpointSchemaVersion},
                    {"model", to_json(cache.config)},
                    {"stage1_digest", cache.stage_one_digest},
                    {"patients", std::move(patients)}};
  return c;
}

TupleCache tuple_cache_from_container(const Container& c) {
  require_kind(c, kTupleCacheKind);
  TupleCache cache;
  cache.config = model_config_from_json(c.metadata.at("model"));
  cache.stage_one_digest = c.metadata.at("stage1_digest").get<std::string>();
  const auto& patients = c.metadata.at("patients");
  if (c.arrays.size() != 3 * patients.size()) {
    throw std::runtime_error("tuple cache: array count does not match patient count");
  }
  for (std::size_t i = 0; i < patients.size(); ++i) {
    StageTwoTuple t;
    t.patient_id = patients[i].at("patient_id").get<std::string>();
    t.t_valid = patients[i].at("t_valid").get<std::size_t>();
    t.label = patients[i].at("label").get<int>();
    t.h_cfc = from_array(c.arrays[3 * i]);
    t.global = from_array(c.arrays[3 * i + 1]);
    t.attention = from_array(c.arrays[3 * i + 2]);
    if (c.arrays[3 * i].name != t.patient_id + "/h_cfc" ||
        t.attention.shape() != grad::Shape{cache.config.t_max, cache.config.t_max} ||
        t.global.size() != cache.config.hidden_dim) {
      throw std::runtime_error("tuple cache: schema mismatch for patient " + t.patient_id);
    }
    cache.tuples.push_back(std::move(t));
  }
  return cache;
}

}  // namespace ctformer::pipeline
