#ifndef CTFORMER_PIPELINE_MODEL_H_
#define CTFORMER_PIPELINE_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctformer/data/patient_sequence.h"
#include "ctformer/model/causal.h"
#include "ctformer/model/cfc.h"
#include "ctformer/model/fusion.h"
#include "ctformer/model/transformer.h"
#include "ctformer/nn/layers.h"

namespace ctformer::pipeline {

using grad::Tensor;

enum class Variant { kFull, kNoCfc, kNoTransformer, kGOnly, kLOnly };

std::string variant_name(Variant v);
// Throws std::invalid_argument listing the valid names.
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();
// Whether the variant has a second stage at all.
bool has_stage_two(Variant v);

struct ModelConfig {
  std::size_t n_features = 12;
  std::size_t t_max = 48;
  std::size_t hidden_dim = 16;
  std::size_t backbone_dim = 32;
  std::size_t cfc_layers = 1;
  std::size_t transformer_layers = 3;
  std::size_t n_heads = 4;
  std::size_t ff_dim = 64;

  bool operator==(const ModelConfig&) const = default;
};

// CfC encoder (or an affine input embedding for no_cfc), transformer (absent
// for no_transformer) and the stage-one logistic head.
struct StageOneModel {
  ModelConfig config;
  Variant variant = Variant::kFull;
  model::CfcEncoder cfc;
  Tensor embed_w, embed_b;
  model::TransformerParams transformer;
  nn::LogisticHead head;

  static StageOneModel init(const ModelConfig& config, Variant variant, std::uint64_t seed);
  std::vector<nn::NamedTensor> params() const;
};

struct StageOneOutput {
  Tensor h_cfc;      // [t_max x d]
  Tensor attention;  // [t_max x t_max]; undefined without a transformer
  Tensor global;     // [d]
  Tensor probability;
  std::size_t t_valid = 0;
};

StageOneOutput stage_one_forward(const StageOneModel& model, const data::PatientSequence& seq);

// Frozen stage-one extract for one patient.
struct StageTwoTuple {
  std::string patient_id;
  Tensor h_cfc;
  Tensor global;
  Tensor attention;
  std::size_t t_valid = 0;
  int label = 0;
};

StageTwoTuple make_tuple(const StageOneModel& model, const data::PatientSequence& seq);

// Causal head W_c, gate and classifier. g_only uses only the classifier on
// G; l_only uses W_c and the classifier on L.
struct StageTwoModel {
  Variant variant = Variant::kFull;
  Tensor w_c;
  model::FusionParams fusion;

  static StageTwoModel init(std::size_t t_max, std::size_t hidden_dim, Variant variant,
                            std::uint64_t seed);
  std::vector<nn::NamedTensor> params() const;
};

struct StageTwoOutput {
  Tensor probability;
  std::optional<model::CausalExtract> causal;
  Tensor gate;
};

StageTwoOutput stage_two_forward(const StageTwoModel& model, const StageTwoTuple& tuple);

// Stage one runs without recording (frozen) and feeds stage two.
StageTwoOutput stage_two_from_sequence(const StageOneModel& stage1, const StageTwoModel& stage2,
                                       const data::PatientSequence& seq);

// Final risk for one sequence: stage two when present, else the stage-one
// head. Records nothing.
double predict_probability(const StageOneModel& stage1, const StageTwoModel* stage2,
                           const data::PatientSequence& seq);

// FNV-1a over names, shapes and value bytes, as 16 hex digits.
std::string parameter_digest(const std::vector<nn::NamedTensor>& params);

}  // namespace ctformer::pipeline

#endif  // CTFORMER_PIPELINE_MODEL_H_
