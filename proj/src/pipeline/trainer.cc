#include "ctformer/pipeline/trainer.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctformer/grad/ops.h"
#include "ctformer/metrics/metrics.h"
#include "ctformer/nn/optimizer.h"
#include "ctformer/util/parallel.h"

namespace ctformer::pipeline {

using nlohmann::json;
namespace g = ctformer::grad;

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
  if (c.batch_size == 0) fail("batch_size must be > 0");
  if (!(c.lr_stage1 > 0.0) || !(c.lr_stage2 > 0.0)) fail("learning rates must be > 0");
  if (c.max_epochs_stage1 == 0 || c.max_epochs_stage2 == 0) fail("max epochs must be > 0");
  if (!(c.lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    fail("betas must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(c.train_fraction > 0.0) || !(c.val_fraction >= 0.0) || !(c.test_fraction >= 0.0)) {
    fail("split fractions must be non-negative with a positive train fraction");
  }
  if (std::abs(c.train_fraction + c.val_fraction + c.test_fraction - 1.0) > 1e-9) {
    fail("split fractions must sum to 1");
  }
  if (!(c.positive_weight > 0.0)) fail("positive_weight must be > 0");
  if (c.threads == 0) fail("threads must be > 0");
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"lr_stage1", c.lr_stage1},
              {"lr_stage2", c.lr_stage2},
              {"max_epochs_stage1", c.max_epochs_stage1},
              {"max_epochs_stage2", c.max_epochs_stage2},
              {"patience", c.patience},
              {"lambda", c.lambda},
              {"rng_seed", c.rng_seed},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"train_fraction", c.train_fraction},
              {"val_fraction", c.val_fraction},
              {"test_fraction", c.test_fraction},
              {"positive_weight", c.positive_weight},
              {"warm_start", c.warm_start},
              {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const json defaults = to_json(c);
  for (const auto& item : j.items()) {
    if (!defaults.contains(item.key())) {
      throw std::runtime_error("train config: unknown key '" + item.key() + "'");
    }
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
  c.lr_stage2 = j.value("lr_stage2", c.lr_stage2);
  c.max_epochs_stage1 = j.value("max_epochs_stage1", c.max_epochs_stage1);
  c.max_epochs_stage2 = j.value("max_epochs_stage2", c.max_epochs_stage2);
  c.patience = j.value("patience", c.patience);
  c.lambda = j.value("lambda", c.lambda);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.positive_weight = j.value("positive_weight", c.positive_weight);
  c.warm_start = j.value("warm_start", c.warm_start);
  c.threads = j.value("threads", c.threads);
  validate(c);
  return c;
}

SplitIndices split_patients(const std::vector<data::PatientSequence>& cohort,
                            const TrainConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.rng_seed ^ 0x5851F42D4C957F2DULL);
  SplitIndices out;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (cohort[i].label == label) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * config.train_fraction));
    const auto n_val = std::min(idx.size() - n_train,
                                static_cast<std::size_t>(std::llround(n * config.val_fraction)));
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + n_train);
    out.val.insert(out.val.end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
    out.test.insert(out.test.end(), idx.begin() + n_train + n_val, idx.end());
  }
  for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

json to_json(const EpochRecord& r) {
  json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}};
  j["val_auroc"] = r.val_auroc ? json(*r.val_auroc) : json(nullptr);
  j["val_auprc"] = r.val_auprc ? json(*r.val_auprc) : json(nullptr);
  j["improved"] = r.improved;
  return j;
}

namespace {

double bce_value(double p, int y, double positive_weight) {
  p = std::clamp(p, g::kProbabilityClamp, 1.0 - g::kProbabilityClamp);
  return y ? -positive_weight * std::log(p) : -std::log(1.0 - p);
}

struct Validation {
  double loss = 0.0;
  std::optional<double> auroc, auprc;
  // Higher is better: AUPRC when both classes are present, else -loss.
  double score = 0.0;
};

Validation score_predictions(const std::vector<double>& probs, const std::vector<int>& labels,
                             double positive_weight) {
  Validation v;
  if (probs.empty()) return v;
  for (std::size_t i = 0; i < probs.size(); ++i) v.loss += bce_value(probs[i], labels[i], positive_weight);
  v.loss /= static_cast<double>(probs.size());
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (has_pos && has_neg) {
    metrics::ScoredSet set{probs, labels};
    v.auroc = metrics::auroc(set);
    v.auprc = metrics::auprc(set);
    v.score = *v.auprc;
  } else {
    v.score = -v.loss;
  }
  return v;
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<nn::NamedTensor>& params) {
  Snapshot s;
  for (const auto& p : params) s.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return s;
}

void restore(const std::vector<nn::NamedTensor>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(s[i].begin(), s[i].end(), t.mutable_values().begin());
  }
}

[[noreturn]] void abort_non_finite(const char* stage, std::size_t epoch, std::size_t batch,
                                   const std::vector<nn::NamedTensor>& params) {
  std::ostringstream msg;
  msg << stage << ": non-finite loss at epoch " << epoch << ", batch " << batch
      << "; parameter norms:";
  for (const auto& p : params) {
    double sq = 0.0;
    for (double v : p.tensor.values()) sq += v * v;
    msg << ' ' << p.name << '=' << std::sqrt(sq);
  }
  throw std::runtime_error(msg.str());
}

// Shared epoch loop. `loss_of(i)` builds the recorded loss for training item
// i; `validate_fn()` scores the current parameters.
template <typename LossFn, typename ValidateFn>
TrainLog run_training(const char* stage, std::size_t n_train, std::vector<nn::NamedTensor> params,
                      double lr, std::size_t max_epochs, const TrainConfig& config,
                      std::uint64_t shuffle_stream, LossFn&& loss_of, ValidateFn&& validate_fn,
                      const EpochCallback& on_epoch) {
  if (n_train == 0) throw std::invalid_argument(std::string(stage) + ": empty training split");
  nn::Adam adam(params, nn::AdamOptions{lr, config.beta1, config.beta2, config.epsilon});
  std::mt19937_64 rng(config.rng_seed ^ shuffle_stream);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

  TrainLog log;
  Snapshot best = snapshot(params);
  bool have_best = false;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n_train, start + config.batch_size);
      adam.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        g::Tape tape;
        Tensor loss = loss_of(order[k]);
        const double value = loss.item();
        if (!std::isfinite(value)) abort_non_finite(stage, epoch, batch_index, params);
        total += value;
        tape.backward(loss);
      }
      adam.scale_grad(1.0 / static_cast<double>(end - start));
      adam.step();
    }
    adam.zero_grad();

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = total / static_cast<double>(n_train);
    const Validation v = validate_fn();
    record.val_loss = v.loss;
    record.val_auroc = v.auroc;
    record.val_auprc = v.auprc;
    record.improved = !have_best || v.score > log.best_score;
    if (record.improved) {
      have_best = true;
      log.best_score = v.score;
      log.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else {
      ++stale;
    }
    log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stale > config.patience) {
      log.early_stopped = true;
      break;
    }
  }
  restore(params, best);
  return log;
}

std::vector<int> labels_of(const std::vector<data::PatientSequence>& cohort) {
  std::vector<int> out;
  for (const auto& s : cohort) out.push_back(s.label);
  return out;
}

std::vector<int> labels_of(const std::vector<StageTwoTuple>& tuples) {
  std::vector<int> out;
  for (const auto& t : tuples) out.push_back(t.label);
  return out;
}

}  // namespace

std::vector<double> predict_stage1(const StageOneModel& model,
                                   const std::vector<data::PatientSequence>& cohort,
                                   std::size_t threads) {
  std::vector<double> out(cohort.size());
  util::parallel_for(cohort.size(), threads, [&](std::size_t i) {
    g::NoGradGuard no_grad;
    out[i] = stage_one_forward(model, cohort[i]).probability.item();
  });
  return out;
}

std::vector<double> predict_stage2(const StageTwoModel& model,
                                   const std::vector<StageTwoTuple>& tuples, std::size_t threads) {
  std::vector<double> out(tuples.size());
  util::parallel_for(tuples.size(), threads, [&](std::size_t i) {
    g::NoGradGuard no_grad;
    out[i] = stage_two_forward(model, tuples[i]).probability.item();
  });
  return out;
}

std::vector<StageTwoTuple> extract_representations(const StageOneModel& model,
                                                   const std::vector<data::PatientSequence>& cohort,
                                                   std::size_t threads) {
  std::vector<StageTwoTuple> out(cohort.size());
  util::parallel_for(cohort.size(), threads,
                     [&](std::size_t i) { out[i] = make_tuple(model, cohort[i]); });
  return out;
}

StageOneResult train_stage1(const std::vector<data::PatientSequence>& train,
                            const std::vector<data::PatientSequence>& val,
                            const ModelConfig& model_config, Variant variant,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  StageOneResult result{StageOneModel::init(model_config, variant, config.rng_seed), {}};
  const StageOneModel& model = result.model;
  const std::vector<int> val_labels = labels_of(val);
  result.log = run_training(
      "train_stage1", train.size(), model.params(), config.lr_stage1, config.max_epochs_stage1,
      config, 0x243F6A8885A308D3ULL,
      [&](std::size_t i) {
        return g::binary_cross_entropy(stage_one_forward(model, train[i]).probability,
                                       train[i].label, config.positive_weight);
      },
      [&] {
        return score_predictions(predict_stage1(model, val, config.threads), val_labels,
                                 config.positive_weight);
      },
      on_epoch);
  return result;
}

StageTwoResult train_stage2(const std::vector<StageTwoTuple>& train,
                            const std::vector<StageTwoTuple>& val, const ModelConfig& model_config,
                            Variant variant, const TrainConfig& config,
                            const nn::LogisticHead* stage1_head, const EpochCallback& on_epoch) {
  validate(config);
  if (!has_stage_two(variant)) {
    throw std::invalid_argument("train_stage2: variant " + variant_name(variant) +
                                " has no second stage");
  }
  for (const auto* set : {&train, &val}) {
    for (const StageTwoTuple& t : *set) {
      if (t.global.size() != model_config.hidden_dim ||
          t.h_cfc.shape() != g::Shape{model_config.t_max, model_config.hidden_dim} ||
          t.attention.shape() != g::Shape{model_config.t_max, model_config.t_max}) {
        throw std::invalid_argument("train_stage2: tuple " + t.patient_id +
                                    " does not match the model configuration");
      }
    }
  }
  StageTwoResult result{
      StageTwoModel::init(model_config.t_max, model_config.hidden_dim, variant, config.rng_seed), {}};
  StageTwoModel& model = result.model;
  if (config.warm_start && stage1_head != nullptr) {
    Tensor w = model.fusion.classifier.weight, b = model.fusion.classifier.bias;
    std::copy(stage1_head->weight.values().begin(), stage1_head->weight.values().end(),
              w.mutable_values().begin());
    std::copy(stage1_head->bias.values().begin(), stage1_head->bias.values().end(),
              b.mutable_values().begin());
  }
  const std::vector<int> val_labels = labels_of(val);
  result.log = run_training(
      "train_stage2", train.size(), model.params(), config.lr_stage2, config.max_epochs_stage2,
      config, 0x13198A2E03707344ULL,
      [&](std::size_t i) {
        const StageTwoOutput out = stage_two_forward(model, train[i]);
        if (!out.causal) {
          return g::binary_cross_entropy(out.probability, train[i].label, config.positive_weight);
        }
        return model::stage2_loss(out.probability, train[i].label, out.causal->causal,
                                  config.lambda, train[i].t_valid, config.positive_weight);
      },
      [&] {
        return score_predictions(predict_stage2(model, val, config.threads), val_labels,
                                 config.positive_weight);
      },
      on_epoch);
  return result;
}

}  // namespace ctformer::pipeline
