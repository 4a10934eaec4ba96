#include "ctformer/model/cfc.h"

#include <cmath>
#include <stdexcept>

#include "ctformer/grad/ops.h"

namespace ctformer::model {

namespace g = ctformer::grad;

CfcParams CfcParams::init(std::size_t input_dim, std::size_t hidden_dim, std::size_t backbone_dim,
                          nn::Initializer& init) {
  CfcParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.backbone_dim = backbone_dim;
  const std::size_t z = input_dim + hidden_dim;
  p.backbone_w = init.fan_in_uniform(backbone_dim, z);
  p.backbone_b = init.fan_in_bias(backbone_dim, z);
  p.f_w = init.fan_in_uniform(hidden_dim, backbone_dim);
  // Moderate initial decay gates.
  p.f_b = init.constant({hidden_dim}, 1.0);
  p.g_w = init.fan_in_uniform(hidden_dim, backbone_dim);
  p.g_b = init.fan_in_bias(hidden_dim, backbone_dim);
  p.k_w = init.fan_in_uniform(hidden_dim, backbone_dim);
  p.k_b = init.fan_in_bias(hidden_dim, backbone_dim);
  return p;
}

void CfcParams::collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  out.push_back({prefix + ".backbone_w", backbone_w});
  out.push_back({prefix + ".backbone_b", backbone_b});
  out.push_back({prefix + ".f_w", f_w});
  out.push_back({prefix + ".f_b", f_b});
  out.push_back({prefix + ".g_w", g_w});
  out.push_back({prefix + ".g_b", g_b});
  out.push_back({prefix + ".k_w", k_w});
  out.push_back({prefix + ".k_b", k_b});
}

CfcHeads cfc_heads(const Tensor& input, const Tensor& h_prev, const CfcParams& params) {
  if (input.size() != params.input_dim || h_prev.size() != params.hidden_dim) {
    throw std::invalid_argument("cfc_cell: input " + g::shape_to_string(input.shape()) +
                                " / state " + g::shape_to_string(h_prev.shape()) +
                                " do not match layer widths");
  }
  const Tensor z = g::concat({input, h_prev});
  const Tensor backbone = g::tanh(g::linear(z, params.backbone_w, params.backbone_b));
  return CfcHeads{g::linear(backbone, params.f_w, params.f_b),
                  g::tanh(g::linear(backbone, params.g_w, params.g_b)),
                  g::tanh(g::linear(backbone, params.k_w, params.k_b))};
}

Tensor cfc_cell(const Tensor& input, const Tensor& h_prev, double dt, const CfcParams& params) {
  if (!(dt >= 0.0)) throw std::invalid_argument("cfc_cell: negative elapsed time");
  const CfcHeads heads = cfc_heads(input, h_prev, params);
  const Tensor gate = g::sigmoid(g::scale(heads.f, -dt));
  return g::add(g::mul(gate, heads.g), g::mul(g::one_minus(gate), heads.k));
}

CfcEncoder CfcEncoder::init(std::size_t n_features, std::size_t hidden_dim,
                            std::size_t backbone_dim, std::size_t n_layers,
                            nn::Initializer& init) {
  if (n_layers == 0) throw std::invalid_argument("CfcEncoder: at least one layer required");
  CfcEncoder enc;
  std::size_t in = cfc_input_dim(n_features);
  for (std::size_t l = 0; l < n_layers; ++l) {
    enc.layers.push_back(CfcParams::init(in, hidden_dim, backbone_dim, init));
    in = hidden_dim;
  }
  return enc;
}

void CfcEncoder::collect(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(prefix + "." + std::to_string(l), out);
  }
}

Tensor sequence_inputs(const data::PatientSequence& seq) {
  const std::size_t f = seq.n_features(), width = cfc_input_dim(f);
  std::vector<double> values(seq.t_valid * width);
  for (std::size_t t = 0; t < seq.t_valid; ++t) {
    double* row = values.data() + t * width;
    for (std::size_t c = 0; c < f; ++c) {
      row[c] = seq.values(t, c);
      row[f + c] = seq.obs_mask(t, c);
      row[2 * f + c] = std::log1p(seq.feature_delta(t, c));
    }
    row[3 * f] = 1.0;
  }
  return Tensor({seq.t_valid, width}, std::move(values));
}

CfcStates encode_sequence(const data::PatientSequence& seq, const CfcEncoder& encoder) {
  if (seq.t_valid == 0) throw std::invalid_argument("encode_sequence: empty sequence");
  if (encoder.layers.empty()) throw std::invalid_argument("encode_sequence: encoder has no layers");
  Tensor inputs = sequence_inputs(seq);
  for (const CfcParams& layer : encoder.layers) {
    std::vector<Tensor> states;
    states.reserve(seq.t_valid);
    Tensor h = Tensor::zeros({layer.hidden_dim});
    for (std::size_t t = 0; t < seq.t_valid; ++t) {
      h = cfc_cell(g::row(inputs, t), h, seq.step_delta[t], layer);
      states.push_back(h);
    }
    inputs = g::stack_rows(states);
  }
  return CfcStates{g::pad(inputs, seq.t_max(), encoder.hidden_dim()), seq.t_valid};
}

}  // namespace ctformer::model
