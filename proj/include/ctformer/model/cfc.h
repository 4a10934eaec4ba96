#ifndef CTFORMER_MODEL_CFC_H_
#define CTFORMER_MODEL_CFC_H_

#include <cstddef>
#include <vector>

#include "ctformer/data/patient_sequence.h"
#include "ctformer/grad/tensor.h"
#include "ctformer/nn/layers.h"

namespace ctformer::model {

using grad::Tensor;

// Input width of the first CfC layer: values, mask, log1p(feature_delta) and a
// validity flag.
inline std::size_t cfc_input_dim(std::size_t n_features) { return 3 * n_features + 1; }

// One closed-form continuous-time layer: a shared tanh backbone over
// z = [u; h_prev] feeding three affine heads f (decay logits), g and k
// (tanh candidate states).
struct CfcParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t backbone_dim = 0;
  Tensor backbone_w;  // [backbone x (input + hidden)]
  Tensor backbone_b;  // [backbone]
  Tensor f_w, f_b;    // [hidden x backbone], [hidden]
  Tensor g_w, g_b;
  Tensor k_w, k_b;

  static CfcParams init(std::size_t input_dim, std::size_t hidden_dim, std::size_t backbone_dim,
                        nn::Initializer& init);
  void collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const;
};

struct CfcHeads {
  Tensor f, g, k;
};

// Backbone and heads evaluated at z = [u; h_prev].
CfcHeads cfc_heads(const Tensor& input, const Tensor& h_prev, const CfcParams& params);

// h = s * g + (1 - s) * k with s = sigmoid(-f * dt). Throws on dt < 0.
Tensor cfc_cell(const Tensor& input, const Tensor& h_prev, double dt, const CfcParams& params);

// Stacked layers; layer l > 0 consumes the hidden states of layer l - 1.
struct CfcEncoder {
  std::vector<CfcParams> layers;

  static CfcEncoder init(std::size_t n_features, std::size_t hidden_dim, std::size_t backbone_dim,
                         std::size_t n_layers, nn::Initializer& init);
  std::size_t hidden_dim() const { return layers.back().hidden_dim; }
  void collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const;
};

struct CfcStates {
  Tensor states;  // [t_max x hidden], rows >= t_valid zero
  std::size_t t_valid = 0;
};

// Per-step inputs u_t = [values; obs_mask; log1p(feature_delta); 1] for the
// valid rows, as a constant [t_valid x (3F + 1)] tensor.
Tensor sequence_inputs(const data::PatientSequence& seq);

// Runs the stack over steps 0..t_valid-1 with dt = step_delta[t] and h_0 = 0.
CfcStates encode_sequence(const data::PatientSequence& seq, const CfcEncoder& encoder);

}  // namespace ctformer::model

#endif  // CTFORMER_MODEL_CFC_H_
