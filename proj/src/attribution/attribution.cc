#include "ctformer/attribution/attribution.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ctformer/grad/tensor.h"
#include "ctformer/util/format.h"

namespace ctformer::attribution {

using nlohmann::json;
using util::format_double;

Predictor make_predictor(const pipeline::StageOneModel& stage1, const pipeline::StageTwoModel* stage2) {
  return [&stage1, stage2](const PatientSequence& seq) {
    return pipeline::predict_probability(stage1, stage2, seq);
  };
}

PatientSequence perturb_cells(const PatientSequence& seq, const data::MaskGrid& off) {
  if (off.rows != seq.t_max() || off.cols != seq.n_features()) {
    throw std::invalid_argument("perturb_cells: off-mask shape does not match the sequence");
  }
  PatientSequence out = seq;
  bool changed = false;
  for (std::size_t t = 0; t < seq.t_valid; ++t) {
    for (std::size_t f = 0; f < seq.n_features(); ++f) {
      if (off(t, f) && out.obs_mask(t, f)) {
        out.obs_mask(t, f) = 0;
        out.values(t, f) = 0.0;
        changed = true;
      }
    }
  }
  if (changed) out.feature_delta = data::compute_deltas(out.timestamps, out.obs_mask).feature_delta;
  return out;
}

PatientSequence perturb_sequence(const PatientSequence& seq, const std::set<std::size_t>& off_events,
                                 const std::set<std::size_t>& off_features) {
  if (!off_events.empty() && *off_events.rbegin() >= seq.t_valid) {
    throw std::out_of_range("perturb_sequence: step " + std::to_string(*off_events.rbegin()) +
                            " beyond t_valid " + std::to_string(seq.t_valid));
  }
  if (!off_features.empty() && *off_features.rbegin() >= seq.n_features()) {
    throw std::out_of_range("perturb_sequence: feature " + std::to_string(*off_features.rbegin()) +
                            " beyond " + std::to_string(seq.n_features()) + " features");
  }
  data::MaskGrid off(seq.t_max(), seq.n_features(), 0);
  for (std::size_t t = 0; t < seq.t_valid; ++t) {
    for (std::size_t f = 0; f < seq.n_features(); ++f) {
      off(t, f) = off_events.contains(t) || off_features.contains(f);
    }
  }
  return perturb_cells(seq, off);
}

PatientSequence background_sequence(const PatientSequence& seq) {
  return perturb_cells(seq, data::MaskGrid(seq.t_max(), seq.n_features(), 1));
}

CoalitionGame cell_game(const PatientSequence& seq, const Predictor& predict,
                        std::vector<std::vector<Cell>> players) {
  CoalitionGame game;
  game.n_players = players.size();
  game.value = [&seq, predict, players = std::move(players)](const Coalition& on) {
    data::MaskGrid off(seq.t_max(), seq.n_features(), 1);
    for (std::size_t p = 0; p < players.size(); ++p) {
      if (!on[p]) continue;
      for (const Cell& c : players[p]) off(c.first, c.second) = 0;
    }
    return predict(perturb_cells(seq, off));
  };
  return game;
}

namespace {

std::vector<Cell> step_cells(const PatientSequence& seq, std::size_t begin, std::size_t end) {
  std::vector<Cell> cells;
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t f = 0; f < seq.n_features(); ++f) cells.emplace_back(t, f);
  }
  return cells;
}

LevelMeta meta_of(const ShapleyValues& v) {
  LevelMeta m;
  m.exact = v.exact;
  m.players = v.values.size();
  m.permutations = v.permutations;
  m.evaluations = v.evaluations;
  // Exact enumeration and telescoping permutation sums are both exact up to
  // rounding.
  m.efficiency_tolerance = 1e-9;
  return m;
}

}  // namespace

PruningResult temporal_prune(const PatientSequence& seq, const Predictor& predict, double tolerance) {
  if (!(tolerance >= 0.0)) throw std::invalid_argument("temporal_prune: tolerance must be >= 0");
  PruningResult out;
  out.prefix_values.assign(seq.t_valid, 0.0);
  const double background = predict(background_sequence(seq));
  const double full = predict(seq);
  for (std::size_t cut = 1; cut < seq.t_valid; ++cut) {
    data::MaskGrid prefix_off(seq.t_max(), seq.n_features(), 0), recent_off(seq.t_max(), seq.n_features(), 0);
    for (std::size_t f = 0; f < seq.n_features(); ++f) {
      for (std::size_t t = 0; t < seq.t_valid; ++t) (t < cut ? prefix_off : recent_off)(t, f) = 1;
    }
    const double only_prefix = predict(perturb_cells(seq, recent_off));
    const double only_recent = predict(perturb_cells(seq, prefix_off));
    out.prefix_values[cut] = 0.5 * ((only_prefix - background) + (full - only_recent));
  }
  for (std::size_t cut = 0; cut < seq.t_valid; ++cut) {
    if (std::abs(out.prefix_values[cut]) <= tolerance) out.index = cut;
  }
  return out;
}

void validate(const AttributionConfig& c) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("AttributionConfig: " + what);
  };
  if (!(c.prune_tolerance >= 0.0)) fail("prune_tolerance must be >= 0");
  if (c.exact_max_players > kMaxExactPlayers) fail("exact_max_players must be <= 15");
  if (c.permutations == 0) fail("permutations must be > 0");
  if (c.top_events == 0 || c.top_features == 0 || c.alignment_k == 0) fail("top-k sizes must be > 0");
  if (c.threads == 0) fail("threads must be > 0");
}

json to_json(const AttributionConfig& c) {
  return json{{"prune_tolerance", c.prune_tolerance}, {"exact_max_players", c.exact_max_players},
              {"permutations", c.permutations},       {"top_events", c.top_events},
              {"top_features", c.top_features},       {"alignment_k", c.alignment_k},
              {"seed", c.seed},                       {"threads", c.threads}};
}

AttributionConfig attribution_config_from_json(const json& j) {
  AttributionConfig c;
  const json defaults = to_json(c);
  for (const auto& item : j.items()) {
    if (!defaults.contains(item.key())) {
      throw std::runtime_error("attribution config: unknown key '" + item.key() + "'");
    }
  }
  c.prune_tolerance = j.value("prune_tolerance", c.prune_tolerance);
  c.exact_max_players = j.value("exact_max_players", c.exact_max_players);
  c.permutations = j.value("permutations", c.permutations);
  c.top_events = j.value("top_events", c.top_events);
  c.top_features = j.value("top_features", c.top_features);
  c.alignment_k = j.value("alignment_k", c.alignment_k);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  validate(c);
  return c;
}

ShapleyValues solve(const CoalitionGame& game, const AttributionConfig& config) {
  if (game.n_players <= config.exact_max_players) return exact_shapley(game, config.threads);
  return sampled_shapley(game, config.permutations, config.seed, config.threads);
}

void event_level(const PatientSequence& seq, const Predictor& predict,
                 const AttributionConfig& config, AttributionReport& r) {
  const std::size_t cut = r.pruning_index;
  std::vector<std::vector<Cell>> players;
  r.event_steps.clear();
  for (std::size_t t = cut; t < seq.t_valid; ++t) {
    players.push_back(step_cells(seq, t, t + 1));
    r.event_steps.push_back(t);
  }
  if (cut > 0) players.push_back(step_cells(seq, 0, cut));
  const ShapleyValues v = solve(cell_game(seq, predict, std::move(players)), config);
  const std::size_t n_events = r.event_steps.size();
  r.event_values.assign(v.values.begin(), v.values.begin() + static_cast<std::ptrdiff_t>(n_events));
  r.event_standard_errors.assign(v.standard_errors.begin(),
                                 v.standard_errors.begin() + static_cast<std::ptrdiff_t>(n_events));
  r.pruned_value = cut > 0 ? v.values.back() : 0.0;
  r.full_value = v.full_value;
  r.background_value = v.background_value;
  r.event_meta = meta_of(v);
}

void feature_level(const PatientSequence& seq, const Predictor& predict,
                   const AttributionConfig& config, AttributionReport& r) {
  const std::size_t cut = r.pruning_index;
  std::vector<std::vector<Cell>> players(seq.n_features());
  for (std::size_t f = 0; f < seq.n_features(); ++f) {
    for (std::size_t t = cut; t < seq.t_valid; ++t) players[f].emplace_back(t, f);
  }
  if (cut > 0) players.push_back(step_cells(seq, 0, cut));
  const ShapleyValues v = solve(cell_game(seq, predict, std::move(players)), config);
  const std::size_t n = seq.n_features();
  r.feature_values.assign(v.values.begin(), v.values.begin() + static_cast<std::ptrdiff_t>(n));
  r.feature_standard_errors.assign(v.standard_errors.begin(),
                                   v.standard_errors.begin() + static_cast<std::ptrdiff_t>(n));
  r.feature_pruned_value = cut > 0 ? v.values.back() : 0.0;
  r.feature_meta = meta_of(v);
}

void cell_level(const PatientSequence& seq, const Predictor& predict,
                const AttributionConfig& config, AttributionReport& r) {
  std::vector<double> event_mag, feature_mag;
  for (double v : r.event_values) event_mag.push_back(std::abs(v));
  for (double v : r.feature_values) feature_mag.push_back(std::abs(v));
  r.cell_steps.clear();
  for (std::size_t i : top_k(event_mag, config.top_events)) r.cell_steps.push_back(r.event_steps[i]);
  r.cell_features = top_k(feature_mag, config.top_features);
  std::sort(r.cell_steps.begin(), r.cell_steps.end());
  std::sort(r.cell_features.begin(), r.cell_features.end());

  const std::size_t cut = r.pruning_index;
  std::vector<std::vector<Cell>> players;
  data::MaskGrid taken(seq.t_max(), seq.n_features(), 0);
  for (std::size_t t : r.cell_steps) {
    for (std::size_t f : r.cell_features) {
      players.push_back({{t, f}});
      taken(t, f) = 1;
    }
  }
  std::vector<Cell> other;
  for (std::size_t t = cut; t < seq.t_valid; ++t) {
    for (std::size_t f = 0; f < seq.n_features(); ++f) {
      if (!taken(t, f)) other.emplace_back(t, f);
    }
  }
  const std::size_t n_cells = players.size();
  players.push_back(std::move(other));
  if (cut > 0) players.push_back(step_cells(seq, 0, cut));
  const ShapleyValues v = solve(cell_game(seq, predict, std::move(players)), config);
  r.cell_values.assign(r.cell_steps.size(), std::vector<double>(r.cell_features.size(), 0.0));
  for (std::size_t i = 0; i < n_cells; ++i) {
    r.cell_values[i / r.cell_features.size()][i % r.cell_features.size()] = v.values[i];
  }
  r.cell_other_value = v.values[n_cells];
  r.cell_pruned_value = cut > 0 ? v.values[n_cells + 1] : 0.0;
  r.cell_meta = meta_of(v);
}

AttributionReport explain(const PatientSequence& seq, const Predictor& predict,
                          const AttributionConfig& config) {
  validate(config);
  if (seq.t_valid == 0) throw std::invalid_argument("explain: patient " + seq.patient_id + " has no valid steps");
  AttributionReport r;
  r.patient_id = seq.patient_id;
  r.label = seq.label;
  r.t_valid = seq.t_valid;
  r.config = config;
  PruningResult pruning = temporal_prune(seq, predict, config.prune_tolerance);
  r.pruning_index = pruning.index;
  r.pruning_curve = std::move(pruning.prefix_values);
  event_level(seq, predict, config, r);
  feature_level(seq, predict, config, r);
  cell_level(seq, predict, config, r);
  return r;
}

std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (std::size_t x : sa) inter += sb.contains(x);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

AlignmentResult alignment_check(const pipeline::StageOneModel& stage1,
                                const pipeline::StageTwoModel& stage2, const PatientSequence& seq,
                                const AttributionConfig& config) {
  validate(config);
  if (stage2.variant != pipeline::Variant::kFull && stage2.variant != pipeline::Variant::kNoCfc &&
      stage2.variant != pipeline::Variant::kLOnly) {
    throw std::invalid_argument("alignment_check: variant " + pipeline::variant_name(stage2.variant) +
                                " has no causal attention");
  }
  AlignmentResult out;
  out.patient_id = seq.patient_id;
  out.onset_index = seq.onset_index;
  std::vector<double> alpha;
  {
    grad::NoGradGuard no_grad;
    const pipeline::StageTwoOutput o = pipeline::stage_two_from_sequence(stage1, stage2, seq);
    const auto values = o.causal->attention.values();
    alpha.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(seq.t_valid));
  }
  out.alpha_top = top_k(alpha, config.alignment_k);

  const Predictor predict = make_predictor(stage1, &stage2);
  AttributionReport r;
  r.pruning_index = temporal_prune(seq, predict, config.prune_tolerance).index;
  event_level(seq, predict, config, r);
  std::vector<double> mag;
  for (double v : r.event_values) mag.push_back(std::abs(v));
  for (std::size_t i : top_k(mag, config.alignment_k)) out.shapley_top.push_back(r.event_steps[i]);
  out.overlap = jaccard(out.alpha_top, out.shapley_top);
  return out;
}

namespace {

json meta_json(const LevelMeta& m) {
  return json{{"exact", m.exact},
              {"players", m.players},
              {"permutations", m.permutations},
              {"evaluations", m.evaluations},
              {"efficiency_tolerance", m.efficiency_tolerance}};
}

std::ofstream open_csv(const std::string& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header << '\n';
  return out;
}

}  // namespace

json to_json(const AttributionReport& r) {
  json cells = json::array();
  for (const auto& row : r.cell_values) cells.push_back(row);
  return json{{"patient_id", r.patient_id},
              {"label", r.label},
              {"t_valid", r.t_valid},
              {"full_value", r.full_value},
              {"background_value", r.background_value},
              {"pruning_index", r.pruning_index},
              {"pruned_value", r.pruned_value},
              {"event_steps", r.event_steps},
              {"event_values", r.event_values},
              {"event_standard_errors", r.event_standard_errors},
              {"event_meta", meta_json(r.event_meta)},
              {"feature_values", r.feature_values},
              {"feature_standard_errors", r.feature_standard_errors},
              {"feature_pruned_value", r.feature_pruned_value},
              {"feature_meta", meta_json(r.feature_meta)},
              {"cell_steps", r.cell_steps},
              {"cell_features", r.cell_features},
              {"cell_values", cells},
              {"cell_other_value", r.cell_other_value},
              {"cell_pruned_value", r.cell_pruned_value},
              {"cell_meta", meta_json(r.cell_meta)},
              {"config", to_json(r.config)}};
}

void write_event_csv(const std::string& path, const AttributionReport& r, const PatientSequence& seq) {
  auto out = open_csv(path, "step,timestamp,value,standard_error");
  for (std::size_t i = 0; i < r.event_steps.size(); ++i) {
    out << r.event_steps[i] << ',' << format_double(seq.timestamps[r.event_steps[i]]) << ','
        << format_double(r.event_values[i]) << ',' << format_double(r.event_standard_errors[i]) << '\n';
  }
}

void write_feature_csv(const std::string& path, const AttributionReport& r) {
  auto out = open_csv(path, "feature,name,value,standard_error");
  for (std::size_t f = 0; f < r.feature_values.size(); ++f) {
    out << f << ',' << data::channel_name(f) << ',' << format_double(r.feature_values[f]) << ','
        << format_double(r.feature_standard_errors[f]) << '\n';
  }
}

void write_cell_csv(const std::string& path, const AttributionReport& r) {
  auto out = open_csv(path, "step,feature,name,value");
  for (std::size_t i = 0; i < r.cell_steps.size(); ++i) {
    for (std::size_t j = 0; j < r.cell_features.size(); ++j) {
      out << r.cell_steps[i] << ',' << r.cell_features[j] << ',' << data::channel_name(r.cell_features[j])
          << ',' << format_double(r.cell_values[i][j]) << '\n';
    }
  }
  out << "other,,other," << format_double(r.cell_other_value) << '\n';
}

void write_pruning_csv(const std::string& path, const AttributionReport& r) {
  auto out = open_csv(path, "cut,prefix_value");
  for (std::size_t c = 0; c < r.pruning_curve.size(); ++c) {
    out << c << ',' << format_double(r.pruning_curve[c]) << '\n';
  }
}

}  // namespace ctformer::attribution
