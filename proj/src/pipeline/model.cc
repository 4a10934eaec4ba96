#include "ctformer/pipeline/model.h"

#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::pipeline {

namespace g = ctformer::grad;

namespace {

// Distinct streams for the two stages so that re-initializing stage two never
// perturbs stage one.
constexpr std::uint64_t kStageTwoStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoCfc:
      return "no_cfc";
    case Variant::kNoTransformer:
      return "no_transformer";
    case Variant::kGOnly:
      return "g_only";
    case Variant::kLOnly:
      return "l_only";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> variants{Variant::kFull, Variant::kNoCfc,
                                             Variant::kNoTransformer, Variant::kGOnly,
                                             Variant::kLOnly};
  return variants;
}

Variant parse_variant(const std::string& name) {
  std::string valid;
  for (Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
    valid += (valid.empty() ? "" : ", ") + variant_name(v);
  }
  throw std::invalid_argument("unknown variant '" + name + "'; valid variants: " + valid);
}

bool has_stage_two(Variant v) { return v != Variant::kNoTransformer; }

StageOneModel StageOneModel::init(const ModelConfig& config, Variant variant, std::uint64_t seed) {
  nn::Initializer init(seed);
  StageOneModel m;
  m.config = config;
  m.variant = variant;
  if (variant == Variant::kNoCfc) {
    const std::size_t in = model::cfc_input_dim(config.n_features);
    m.embed_w = init.fan_in_uniform(config.hidden_dim, in);
    m.embed_b = init.fan_in_bias(config.hidden_dim, in);
  } else {
    m.cfc = model::CfcEncoder::init(config.n_features, config.hidden_dim, config.backbone_dim,
                                    config.cfc_layers, init);
  }
  if (variant != Variant::kNoTransformer) {
    m.transformer = model::TransformerParams::init(config.hidden_dim, config.n_heads,
                                                   config.ff_dim, config.transformer_layers, init);
  }
  m.head = nn::LogisticHead::init(config.hidden_dim, init);
  return m;
}

std::vector<nn::NamedTensor> StageOneModel::params() const {
  std::vector<nn::NamedTensor> out;
  if (variant == Variant::kNoCfc) {
    out.push_back({"embed.weight", embed_w});
    out.push_back({"embed.bias", embed_b});
  } else {
    cfc.collect("cfc", out);
  }
  if (variant != Variant::kNoTransformer) transformer.collect("transformer", out);
  head.collect("stage1_head", out);
  return out;
}

StageOneOutput stage_one_forward(const StageOneModel& model, const data::PatientSequence& seq) {
  if (seq.n_features() != model.config.n_features || seq.t_max() != model.config.t_max) {
    throw std::invalid_argument("stage_one_forward: patient " + seq.patient_id +
                                " shape does not match the model configuration");
  }
  StageOneOutput out;
  out.t_valid = seq.t_valid;
  if (model.variant == Variant::kNoCfc) {
    const Tensor embedded = g::linear(model::sequence_inputs(seq), model.embed_w, model.embed_b);
    out.h_cfc = g::pad(embedded, seq.t_max(), model.config.hidden_dim);
  } else {
    out.h_cfc = model::encode_sequence(seq, model.cfc).states;
  }
  if (model.variant == Variant::kNoTransformer) {
    out.global = g::row(out.h_cfc, seq.t_valid - 1);
  } else {
    model::AttentionOutput attn = model::transformer_encode(out.h_cfc, seq.t_valid, model.transformer);
    out.attention = attn.attention;
    out.global = attn.global;
  }
  out.probability = model.head.probability(out.global);
  return out;
}

StageTwoTuple make_tuple(const StageOneModel& model, const data::PatientSequence& seq) {
  g::NoGradGuard no_grad;
  StageOneOutput out = stage_one_forward(model, seq);
  return StageTwoTuple{seq.patient_id, out.h_cfc.detach(), out.global.detach(),
                       out.attention.detach(), seq.t_valid, seq.label};
}

StageTwoModel StageTwoModel::init(std::size_t t_max, std::size_t hidden_dim, Variant variant,
                                  std::uint64_t seed) {
  nn::Initializer init(seed ^ kStageTwoStream);
  StageTwoModel m;
  m.variant = variant;
  m.w_c = init.identity_plus_noise(t_max, 0.01);
  m.fusion = model::FusionParams::init(hidden_dim, init);
  return m;
}

std::vector<nn::NamedTensor> StageTwoModel::params() const {
  std::vector<nn::NamedTensor> out;
  if (variant != Variant::kGOnly) out.push_back({"causal.w_c", w_c});
  if (variant == Variant::kFull || variant == Variant::kNoCfc) {
    out.push_back({"fusion.gate_w", fusion.gate_w});
    out.push_back({"fusion.gate_b", fusion.gate_b});
  }
  fusion.classifier.collect("fusion.classifier", out);
  return out;
}

StageTwoOutput stage_two_forward(const StageTwoModel& model, const StageTwoTuple& tuple) {
  if (!has_stage_two(model.variant)) {
    throw std::invalid_argument("stage_two_forward: variant " + variant_name(model.variant) +
                                " has no second stage");
  }
  if (!tuple.attention.defined()) {
    throw std::invalid_argument("stage_two_forward: tuple " + tuple.patient_id +
                                " carries no attention matrix");
  }
  StageTwoOutput out;
  if (model.variant == Variant::kGOnly) {
    out.probability = model::predict(tuple.global, model.fusion.classifier);
    return out;
  }
  out.causal = model::decouple(tuple.attention, tuple.h_cfc, model.w_c, tuple.t_valid);
  if (model.variant == Variant::kLOnly) {
    out.probability = model::predict(out.causal->local, model.fusion.classifier);
    return out;
  }
  model::FusionOutput fused = model::gated_fusion(tuple.global, out.causal->local, model.fusion);
  out.gate = fused.gate;
  out.probability = model::predict(fused.fused, model.fusion.classifier);
  return out;
}

StageTwoOutput stage_two_from_sequence(const StageOneModel& stage1, const StageTwoModel& stage2,
                                       const data::PatientSequence& seq) {
  StageOneOutput base;
  {
    g::NoGradGuard frozen;
    base = stage_one_forward(stage1, seq);
  }
  StageTwoTuple tuple{seq.patient_id, base.h_cfc, base.global, base.attention, seq.t_valid,
                      seq.label};
  return stage_two_forward(stage2, tuple);
}

double predict_probability(const StageOneModel& stage1, const StageTwoModel* stage2,
                           const data::PatientSequence& seq) {
  g::NoGradGuard no_grad;
  if (stage2 != nullptr && has_stage_two(stage2->variant)) {
    return stage_two_from_sequence(stage1, *stage2, seq).probability.item();
  }
  return stage_one_forward(stage1, seq).probability.item();
}

std::string parameter_digest(const std::vector<nn::NamedTensor>& params) {
  std::uint64_t hash = 1469598103934665603ULL;
  auto feed = [&hash](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    for (std::size_t d : p.tensor.shape()) {
      const std::uint64_t dim = d;
      feed(&dim, sizeof(dim));
    }
    for (double v : p.tensor.values()) feed(&v, sizeof(v));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace ctformer::pipeline
