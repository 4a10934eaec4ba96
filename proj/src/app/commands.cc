#include "ctformer/app/commands.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "ctformer/data/cohort_io.h"
#include "ctformer/metrics/metrics.h"
#include "ctformer/pipeline/checkpoint.h"
#include "ctformer/util/format.h"

namespace ctformer::app {

namespace fs = std::filesystem;
using nlohmann::json;
using util::format_double;

json to_json(const CommandOptions& o) {
  return json{{"command", o.command},
              {"config_path", o.config_path},
              {"overrides", o.overrides},
              {"out_dir", o.out_dir},
              {"cohort", o.cohort},
              {"run_dir", o.run_dir},
              {"stage", o.stage},
              {"lead_times", o.lead_times},
              {"variants", o.variants},
              {"cfc_layers", o.cfc_layers},
              {"transformer_layers", o.transformer_layers},
              {"patient", o.patient},
              {"whole_cohort", o.whole_cohort},
              {"threads", o.threads}};
}

CommandOptions command_options_from_json(const json& j) {
  CommandOptions o;
  o.command = j.at("command").get<std::string>();
  o.config_path = j.value("config_path", o.config_path);
  o.overrides = j.value("overrides", o.overrides);
  o.out_dir = j.value("out_dir", o.out_dir);
  o.cohort = j.value("cohort", o.cohort);
  o.run_dir = j.value("run_dir", o.run_dir);
  o.stage = j.value("stage", o.stage);
  o.lead_times = j.value("lead_times", o.lead_times);
  o.variants = j.value("variants", o.variants);
  o.cfc_layers = j.value("cfc_layers", o.cfc_layers);
  o.transformer_layers = j.value("transformer_layers", o.transformer_layers);
  o.patient = j.value("patient", o.patient);
  o.whole_cohort = j.value("whole_cohort", o.whole_cohort);
  o.threads = j.value("threads", o.threads);
  return o;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    std::size_t used = 0;
    if (dots == std::string::npos) {
      const std::size_t v = std::stoul(text, &used);
      if (used != text.size() || v == 0) throw std::invalid_argument(text);
      return {v, v};
    }
    const std::string lo_text = text.substr(0, dots), hi_text = text.substr(dots + 2);
    const std::size_t lo = std::stoul(lo_text, &used);
    if (used != lo_text.size()) throw std::invalid_argument(text);
    const std::size_t hi = std::stoul(hi_text, &used);
    if (used != hi_text.size()) throw std::invalid_argument(text);
    // Depths start at one layer.
    if (lo == 0 || lo > hi) throw std::invalid_argument(text);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw std::invalid_argument("bad range '" + text + "', expected a..b with 1 <= a <= b");
  }
}

namespace {

constexpr const char* kEffectiveConfig = "effective_config.json";

// Small NDJSON/CSV writers; every number goes through format_double so files
// are reproducible byte for byte.
class Ndjson {
 public:
  explicit Ndjson(const fs::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void write(const json& j) { out_ << j.dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifact("missing " + path.string() + "; produce it with `" + producer + "`");
  }
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

RunConfig with_threads(RunConfig config, std::size_t threads) {
  if (threads > 0) {
    config.train.threads = threads;
    config.attribution.threads = threads;
  }
  return config;
}

std::vector<std::uint64_t> seeds_of(const RunConfig& c) {
  return c.seeds.empty() ? std::vector<std::uint64_t>{} : c.seeds;
}

// Mean of the present values; nullopt when none.
std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      total += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

pipeline::StageLogger epoch_logger(Ndjson& log, const json& context) {
  return [&log, context](int stage, const pipeline::EpochRecord& r) {
    json j = context;
    j["stage"] = stage;
    j.update(pipeline::to_json(r));
    log.write(j);
    std::fprintf(stderr, "%s stage %d epoch %zu train_loss %.4f val_auprc %s\n",
                 context.dump().c_str(), stage, r.epoch, r.train_loss,
                 r.val_auprc ? format_double(*r.val_auprc).c_str() : "n/a");
  };
}

void write_curves(const fs::path& dir, const std::string& tag, const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  const pipeline::SplitMetrics m = pipeline::score_split(scores, labels);
  if (!m.auroc) return;
  metrics::ScoredSet set{scores, labels};
  metrics::write_curve_csv((dir / ("roc_" + tag + ".csv")).string(),
                           metrics::curve_points(set, metrics::CurveKind::kRoc));
  metrics::write_curve_csv((dir / ("pr_" + tag + ".csv")).string(),
                           metrics::curve_points(set, metrics::CurveKind::kPr));
}

data::Cohort load_cohort_arg(const std::string& arg) {
  if (arg.empty()) throw MissingArtifact("train needs --cohort; produce a cohort with `gen-data`");
  fs::path path = arg;
  if (fs::is_directory(path)) path /= "cohort.ndjson";
  require(path, "gen-data");
  return data::load_cohort(path.string());
}

// ---- gen-data ----

void cmd_gen_data(const CommandOptions&, const RunConfig& config, const fs::path& out) {
  const auto patients = data::generate_synthetic_cohort(config.data);
  data::save_cohort((out / "cohort.ndjson").string(), data::Cohort{config.data, patients});
  auto csv = open_out(out / "cohort_summary.csv");
  csv << "patient_id,label,t_valid,onset_index,onset_hour\n";
  std::size_t positives = 0;
  double t_valid = 0.0;
  for (const auto& p : patients) {
    positives += static_cast<std::size_t>(p.label);
    t_valid += static_cast<double>(p.t_valid);
    csv << p.patient_id << ',' << p.label << ',' << p.t_valid << ','
        << (p.onset_index ? std::to_string(*p.onset_index) : "") << ','
        << (p.onset_hour ? format_double(*p.onset_hour) : "") << '\n';
  }
  Ndjson metrics(out / "metrics.ndjson");
  const auto n = static_cast<double>(patients.size());
  metrics.write(json{{"record", "cohort"},
                     {"n_patients", patients.size()},
                     {"positives", positives},
                     {"prevalence", static_cast<double>(positives) / n},
                     {"mean_t_valid", t_valid / n}});
}

// ---- train ----

struct SplitIds {
  std::vector<std::string> train, val, test;
};

json split_json(const SplitIds& s) { return json{{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

void write_predictions(const fs::path& path, const std::vector<std::string>& ids,
                       const std::vector<int>& labels, const std::vector<double>& scores) {
  auto out = open_out(path);
  out << "patient_id,label,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << labels[i] << ',' << format_double(scores[i]) << '\n';
  }
}

template <typename T>
std::vector<std::string> ids_of(const std::vector<T>& xs) {
  std::vector<std::string> out;
  for (const auto& x : xs) out.push_back(x.patient_id);
  return out;
}

template <typename T>
std::vector<int> labels_of(const std::vector<T>& xs) {
  std::vector<int> out;
  for (const auto& x : xs) out.push_back(x.label);
  return out;
}

json metric_record(const char* record, int stage, const char* split, const pipeline::SplitMetrics& m) {
  json j{{"record", record}, {"stage", stage}, {"split", split}};
  j.update(pipeline::to_json(m));
  return j;
}

void train_stage_one(const CommandOptions& options, const RunConfig& config, const fs::path& out,
                     Ndjson& metrics, Ndjson& log) {
  const data::Cohort cohort = load_cohort_arg(options.cohort);
  if (cohort.patients.empty()) throw std::runtime_error("cohort is empty");
  const pipeline::PreparedCohort prepared = pipeline::prepare_cohort(cohort.patients, config.train);
  pipeline::ModelConfig model = config.model;
  model.n_features = cohort.patients.front().n_features();
  model.t_max = cohort.patients.front().t_max();
  const pipeline::Variant variant = pipeline::Variant::kFull;

  const pipeline::StageOneResult s1 = pipeline::train_stage1(
      prepared.train, prepared.val, model, variant, config.train,
      [&](const pipeline::EpochRecord& r) { epoch_logger(log, json::object())(1, r); });
  const json training{{"best_epoch", s1.log.best_epoch},
                      {"epochs", s1.log.epochs.size()},
                      {"early_stopped", s1.log.early_stopped},
                      {"rng_seed", config.train.rng_seed}};
  pipeline::write_container((out / "stage1.ckpt").string(), pipeline::stage_one_container(s1.model, training));

  {
    auto f = open_out(out / "normalization.json");
    f << data::to_json(prepared.stats).dump(1) << '\n';
  }
  const SplitIds ids{ids_of(prepared.train), ids_of(prepared.val), ids_of(prepared.test)};
  {
    auto f = open_out(out / "split.json");
    f << split_json(ids).dump() << '\n';
  }

  pipeline::TupleCache cache{model, pipeline::parameter_digest(s1.model.params()), {}};
  for (const auto* part : {&prepared.train, &prepared.val, &prepared.test}) {
    auto tuples = pipeline::extract_representations(s1.model, *part, config.train.threads);
    cache.tuples.insert(cache.tuples.end(), tuples.begin(), tuples.end());
  }
  pipeline::write_container((out / "tuples.cache").string(), pipeline::tuple_cache_container(cache));

  const auto val_scores = pipeline::predict_stage1(s1.model, prepared.val, config.train.threads);
  const auto test_scores = pipeline::predict_stage1(s1.model, prepared.test, config.train.threads);
  metrics.write(metric_record("evaluation", 1, "val", pipeline::score_split(val_scores, labels_of(prepared.val))));
  metrics.write(metric_record("evaluation", 1, "test", pipeline::score_split(test_scores, labels_of(prepared.test))));
  write_predictions(out / "predictions_stage1_test.csv", ids.test, labels_of(prepared.test), test_scores);
  write_curves(out, "stage1_test", test_scores, labels_of(prepared.test));
}

void train_stage_two(const CommandOptions& options, const RunConfig& config, const fs::path& out,
                     Ndjson& metrics, Ndjson& log) {
  const fs::path from = options.run_dir.empty() ? out : fs::path(options.run_dir);
  require(from / "tuples.cache", "train --stage 1");
  require(from / "split.json", "train --stage 1");
  require(from / "stage1.ckpt", "train --stage 1");
  const pipeline::StageOneModel stage1 =
      pipeline::stage_one_from_container(pipeline::read_container((from / "stage1.ckpt").string()));
  const pipeline::TupleCache cache =
      pipeline::tuple_cache_from_container(pipeline::read_container((from / "tuples.cache").string()));
  const std::string digest = pipeline::parameter_digest(stage1.params());
  if (cache.stage_one_digest != digest) {
    throw std::runtime_error("tuple cache was extracted from a different stage-one checkpoint");
  }
  json split;
  {
    std::ifstream in(from / "split.json");
    split = json::parse(in);
  }
  std::map<std::string, const pipeline::StageTwoTuple*> by_id;
  for (const auto& t : cache.tuples) by_id[t.patient_id] = &t;
  auto gather = [&](const char* name) {
    std::vector<pipeline::StageTwoTuple> out_tuples;
    for (const auto& id : split.at(name)) {
      const auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) throw std::runtime_error("tuple cache lacks patient " + id.get<std::string>());
      out_tuples.push_back(*it->second);
    }
    return out_tuples;
  };
  const auto train = gather("train"), val = gather("val"), test = gather("test");
  const pipeline::StageTwoResult s2 = pipeline::train_stage2(
      train, val, cache.config, pipeline::Variant::kFull, config.train, &stage1.head,
      [&](const pipeline::EpochRecord& r) { epoch_logger(log, json::object())(2, r); });
  if (pipeline::parameter_digest(stage1.params()) != digest) {
    throw std::logic_error("stage-one parameters changed during stage two");
  }
  const json training{{"best_epoch", s2.log.best_epoch},
                      {"epochs", s2.log.epochs.size()},
                      {"early_stopped", s2.log.early_stopped},
                      {"rng_seed", config.train.rng_seed},
                      {"lambda", config.train.lambda}};
  pipeline::write_container((out / "stage2.ckpt").string(),
                            pipeline::stage_two_container(s2.model, cache.config, digest, training));
  const auto val_scores = pipeline::predict_stage2(s2.model, val, config.train.threads);
  const auto test_scores = pipeline::predict_stage2(s2.model, test, config.train.threads);
  metrics.write(metric_record("evaluation", 2, "val", pipeline::score_split(val_scores, labels_of(val))));
  metrics.write(metric_record("evaluation", 2, "test", pipeline::score_split(test_scores, labels_of(test))));
  metrics.write(json{{"record", "decoupling"}, {"stage1_digest", digest}, {"stage1_unchanged", true}});
  write_predictions(out / "predictions_stage2_test.csv", ids_of(test), labels_of(test), test_scores);
  write_curves(out, "stage2_test", test_scores, labels_of(test));
  if (from != out) fs::copy_file(from / "stage1.ckpt", out / "stage1.ckpt", fs::copy_options::overwrite_existing);
}

void cmd_train(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  if (options.stage != "1" && options.stage != "2" && options.stage != "all") {
    throw std::invalid_argument("--stage must be 1, 2 or all");
  }
  Ndjson metrics(out / "metrics.ndjson");
  Ndjson log(out / "train_log.ndjson");
  if (options.stage != "2") train_stage_one(options, config, out, metrics, log);
  if (options.stage != "1") train_stage_two(options, config, out, metrics, log);
}

// ---- evaluate ----

void cmd_evaluate(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  for (int w : options.lead_times) {
    if (std::find(std::begin(data::kLeadTimes), std::end(data::kLeadTimes), w) == std::end(data::kLeadTimes)) {
      throw std::invalid_argument("lead time " + std::to_string(w) + " is not one of 0,6,12,18,24");
    }
  }
  Ndjson metrics(out / "metrics.ndjson");
  Ndjson log(out / "train_log.ndjson");
  std::vector<std::uint64_t> seeds = seeds_of(config);
  if (seeds.empty()) seeds.push_back(config.data.rng_seed);
  auto runs = open_out(out / "lead_time_runs.csv");
  runs << "seed,lead_time_hours,auroc,auprc,stage1_auroc,stage1_auprc\n";
  auto summary = open_out(out / "lead_time_summary.csv");
  summary << "lead_time_hours,auroc,auprc,seeds\n";
  for (int w : options.lead_times) {
    std::vector<std::optional<double>> aurocs, auprcs;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const pipeline::ExperimentConfig exp =
          config.seeds.empty() ? config.experiment() : pipeline::with_seed(config.experiment(), seeds[k]);
      const pipeline::PipelineResult r =
          pipeline::run_lead_time(exp, w, epoch_logger(log, json{{"seed", seeds[k]}, {"lead_time_hours", w}}));
      const pipeline::SplitMetrics m = r.final_test();
      aurocs.push_back(m.auroc);
      auprcs.push_back(m.auprc);
      runs << seeds[k] << ',' << w << ',' << opt(m.auroc) << ',' << opt(m.auprc) << ','
           << opt(r.stage1_test.auroc) << ',' << opt(r.stage1_test.auprc) << '\n';
      json rec = metric_record("lead_time_run", 2, "test", m);
      rec["seed"] = seeds[k];
      rec["lead_time_hours"] = w;
      metrics.write(rec);
      if (k == 0) write_curves(out, "w" + std::to_string(w), r.test_scores, r.test_labels);
    }
    const auto mean_auroc = mean_of(aurocs), mean_auprc = mean_of(auprcs);
    summary << w << ',' << opt(mean_auroc) << ',' << opt(mean_auprc) << ',' << seeds.size() << '\n';
    metrics.write(json{{"record", "lead_time_summary"},
                       {"lead_time_hours", w},
                       {"auroc", optional_json(mean_auroc)},
                       {"auprc", optional_json(mean_auprc)},
                       {"seeds", seeds.size()}});
  }
}

// ---- ablate ----

void cmd_ablate(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  std::vector<pipeline::Variant> variants;
  if (options.variants.empty()) {
    variants = pipeline::all_variants();
  } else {
    for (const auto& name : options.variants) variants.push_back(pipeline::parse_variant(name));
  }
  Ndjson metrics(out / "metrics.ndjson");
  Ndjson log(out / "train_log.ndjson");
  Ndjson reports(out / "variant_reports.ndjson");
  std::vector<std::uint64_t> seeds = seeds_of(config);
  if (seeds.empty()) seeds.push_back(config.data.rng_seed);
  auto runs = open_out(out / "ablation_runs.csv");
  runs << "seed,variant,auroc,auprc,causal_available\n";
  std::map<pipeline::Variant, std::vector<std::optional<double>>> aurocs, auprcs;
  std::map<pipeline::Variant, bool> causal;
  for (std::uint64_t seed : seeds) {
    const pipeline::ExperimentConfig exp =
        config.seeds.empty() ? config.experiment() : pipeline::with_seed(config.experiment(), seed);
    const pipeline::PreparedCohort cohort =
        pipeline::prepare_cohort(data::generate_synthetic_cohort(exp.data), exp.train);
    const auto results =
        pipeline::run_ablation(variants, cohort, exp.model, exp.train, epoch_logger(log, json{{"seed", seed}}));
    for (const auto& r : results) {
      json report = pipeline::variant_report(r);
      report["seed"] = seed;
      reports.write(report);
      const pipeline::SplitMetrics m = r.final_test();
      aurocs[r.variant].push_back(m.auroc);
      auprcs[r.variant].push_back(m.auprc);
      causal[r.variant] = report["causal_available"].get<bool>();
      runs << seed << ',' << pipeline::variant_name(r.variant) << ',' << opt(m.auroc) << ','
           << opt(m.auprc) << ',' << (causal[r.variant] ? 1 : 0) << '\n';
    }
  }
  auto summary = open_out(out / "ablation_summary.csv");
  summary << "variant,auroc,auprc,causal_available,seeds\n";
  for (pipeline::Variant v : variants) {
    const auto a = mean_of(aurocs[v]), p = mean_of(auprcs[v]);
    summary << pipeline::variant_name(v) << ',' << opt(a) << ',' << opt(p) << ',' << (causal[v] ? 1 : 0)
            << ',' << seeds.size() << '\n';
    metrics.write(json{{"record", "ablation_summary"},
                       {"variant", pipeline::variant_name(v)},
                       {"auroc", optional_json(a)},
                       {"auprc", optional_json(p)},
                       {"causal_available", causal[v]},
                       {"seeds", seeds.size()}});
  }
}

// ---- depth-grid ----

void cmd_depth_grid(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  const auto [c_lo, c_hi] = parse_range(options.cfc_layers);
  const auto [t_lo, t_hi] = parse_range(options.transformer_layers);
  Ndjson metrics(out / "metrics.ndjson");
  Ndjson log(out / "train_log.ndjson");
  const auto cells = pipeline::run_depth_grid(config.experiment(), c_lo, c_hi, t_lo, t_hi,
                                              epoch_logger(log, json{{"record", "depth_grid"}}));
  auto csv = open_out(out / "depth_grid.csv");
  csv << "cfc_layers,transformer_layers,auroc,auprc\n";
  for (const auto& cell : cells) {
    csv << cell.cfc_layers << ',' << cell.transformer_layers << ',' << opt(cell.test.auroc) << ','
        << opt(cell.test.auprc) << '\n';
    json rec = metric_record("depth_grid", 2, "test", cell.test);
    rec["cfc_layers"] = cell.cfc_layers;
    rec["transformer_layers"] = cell.transformer_layers;
    metrics.write(rec);
  }
}

// ---- explain / align-check ----

struct TrainedRun {
  pipeline::StageOneModel stage1;
  std::optional<pipeline::StageTwoModel> stage2;
  std::vector<data::PatientSequence> patients;  // normalized, cohort order
  std::set<std::string> test_ids;
};

TrainedRun load_trained_run(const std::string& run_dir) {
  if (run_dir.empty()) throw MissingArtifact("--run is required; produce a run with `train --stage all`");
  const fs::path dir = run_dir;
  require(dir / "stage1.ckpt", "train --stage 1");
  require(dir / "normalization.json", "train --stage 1");
  require(dir / "split.json", "train --stage 1");
  require(dir / kEffectiveConfig, "train");
  TrainedRun run;
  run.stage1 = pipeline::stage_one_from_container(pipeline::read_container((dir / "stage1.ckpt").string()));
  if (fs::exists(dir / "stage2.ckpt")) {
    run.stage2 = pipeline::stage_two_from_container(pipeline::read_container((dir / "stage2.ckpt").string()));
  }
  json effective, stats, split;
  {
    std::ifstream in(dir / kEffectiveConfig);
    effective = json::parse(in);
  }
  {
    std::ifstream in(dir / "normalization.json");
    stats = json::parse(in);
  }
  {
    std::ifstream in(dir / "split.json");
    split = json::parse(in);
  }
  const CommandOptions train_options = command_options_from_json(effective.at("options"));
  data::Cohort cohort = load_cohort_arg(train_options.cohort);
  run.patients = data::zscore_normalize(std::move(cohort.patients), data::normalization_from_json(stats));
  for (const auto& id : split.at("test")) run.test_ids.insert(id.get<std::string>());
  return run;
}

std::vector<const data::PatientSequence*> select_patients(const CommandOptions& options,
                                                          const RunConfig& config, const TrainedRun& run,
                                                          bool positives_only) {
  std::vector<const data::PatientSequence*> out;
  if (!options.patient.empty()) {
    for (const auto& p : run.patients) {
      if (p.patient_id == options.patient) out.push_back(&p);
    }
    if (out.empty()) throw std::invalid_argument("unknown patient " + options.patient);
    return out;
  }
  if (!options.whole_cohort) throw std::invalid_argument("pass --patient ID or --cohort");
  for (const auto& p : run.patients) {
    if (!run.test_ids.contains(p.patient_id) || (positives_only && p.label != 1)) continue;
    if (config.explain_limit != 0 && out.size() == config.explain_limit) break;
    out.push_back(&p);
  }
  return out;
}

void cmd_explain(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  const TrainedRun run = load_trained_run(options.run_dir);
  const auto patients = select_patients(options, config, run, true);
  const attribution::Predictor predict =
      attribution::make_predictor(run.stage1, run.stage2 ? &*run.stage2 : nullptr);
  Ndjson metrics(out / "metrics.ndjson");
  fs::create_directories(out / "reports");
  for (const data::PatientSequence* p : patients) {
    const attribution::AttributionReport r = attribution::explain(*p, predict, config.attribution);
    const fs::path base = out / "reports" / p->patient_id;
    {
      auto f = open_out(base.string() + ".json");
      f << attribution::to_json(r).dump(1) << '\n';
    }
    attribution::write_event_csv(base.string() + "_events.csv", r, *p);
    attribution::write_feature_csv(base.string() + "_features.csv", r);
    attribution::write_cell_csv(base.string() + "_cells.csv", r);
    attribution::write_pruning_csv(base.string() + "_pruning.csv", r);
    double event_sum = r.pruned_value, feature_sum = r.feature_pruned_value;
    for (double v : r.event_values) event_sum += v;
    for (double v : r.feature_values) feature_sum += v;
    const double target = r.full_value - r.background_value;
    metrics.write(json{{"record", "explanation"},
                       {"patient_id", r.patient_id},
                       {"label", r.label},
                       {"full_value", r.full_value},
                       {"background_value", r.background_value},
                       {"pruning_index", r.pruning_index},
                       {"onset_index", p->onset_index ? json(*p->onset_index) : json(nullptr)},
                       {"event_efficiency_residual", event_sum - target},
                       {"feature_efficiency_residual", feature_sum - target}});
  }
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t x : xs) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

void cmd_align_check(const CommandOptions& options, const RunConfig& config, const fs::path& out) {
  const TrainedRun run = load_trained_run(options.run_dir);
  if (!run.stage2) throw MissingArtifact("missing stage2.ckpt in " + options.run_dir + "; produce it with `train --stage 2`");
  const auto patients = select_patients(options, config, run, true);
  Ndjson metrics(out / "metrics.ndjson");
  auto csv = open_out(out / "alignment.csv");
  csv << "patient_id,onset_index,alpha_top,shapley_top,overlap,onset_in_alpha_top\n";
  double overlap = 0.0;
  std::size_t with_onset = 0, onset_hits = 0;
  for (const data::PatientSequence* p : patients) {
    const attribution::AlignmentResult a =
        attribution::alignment_check(run.stage1, *run.stage2, *p, config.attribution);
    overlap += a.overlap;
    bool hit = false;
    if (a.onset_index) {
      ++with_onset;
      hit = std::find(a.alpha_top.begin(), a.alpha_top.end(), *a.onset_index) != a.alpha_top.end();
      onset_hits += hit;
    }
    csv << a.patient_id << ',' << (a.onset_index ? std::to_string(*a.onset_index) : "") << ','
        << join(a.alpha_top) << ',' << join(a.shapley_top) << ',' << format_double(a.overlap) << ','
        << (a.onset_index ? (hit ? "1" : "0") : "") << '\n';
  }
  const auto n = static_cast<double>(patients.size());
  metrics.write(json{{"record", "alignment_summary"},
                     {"patients", patients.size()},
                     {"k", config.attribution.alignment_k},
                     {"mean_overlap", patients.empty() ? json(nullptr) : json(overlap / n)},
                     {"patients_with_onset", with_onset},
                     {"onset_in_alpha_top_fraction",
                      with_onset == 0 ? json(nullptr)
                                      : json(static_cast<double>(onset_hits) / static_cast<double>(with_onset))}});
}

}  // namespace

void execute(const CommandOptions& options, const RunConfig& config_in) {
  if (options.out_dir.empty()) throw std::invalid_argument("--out is required");
  const RunConfig config = with_threads(config_in, options.threads);
  const fs::path out = options.out_dir;
  fs::create_directories(out);
  {
    auto f = open_out(out / kEffectiveConfig);
    f << json{{"options", to_json(options)}, {"config", to_json(config_in)}}.dump(2) << '\n';
  }
  if (options.command == "gen-data") {
    cmd_gen_data(options, config, out);
  } else if (options.command == "train") {
    cmd_train(options, config, out);
  } else if (options.command == "evaluate") {
    cmd_evaluate(options, config, out);
  } else if (options.command == "ablate") {
    cmd_ablate(options, config, out);
  } else if (options.command == "depth-grid") {
    cmd_depth_grid(options, config, out);
  } else if (options.command == "explain") {
    cmd_explain(options, config, out);
  } else if (options.command == "align-check") {
    cmd_align_check(options, config, out);
  } else {
    throw std::invalid_argument("unknown command '" + options.command + "'");
  }
}

void rerun(const std::string& run_dir, const std::string& out_dir) {
  const fs::path path = fs::path(run_dir) / kEffectiveConfig;
  require(path, "any command");
  json stored;
  {
    std::ifstream in(path);
    stored = json::parse(in);
  }
  CommandOptions options = command_options_from_json(stored.at("options"));
  const RunConfig config = run_config_from_json(stored.at("config"));
  // train --stage 2 reads stage-one artifacts from its own directory unless
  // told otherwise; keep pointing at the original.
  if (options.command == "train" && options.stage == "2" && options.run_dir.empty()) {
    options.run_dir = absolute(run_dir);
  }
  options.out_dir = out_dir;
  execute(options, config);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"ctformer: two-stage continuous-time causal transformer on synthetic ICU cohorts"};
  app.require_subcommand(1);
  // Top-level help covers every command and flag.
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Show help for every command and flag");

  CommandOptions o;
  std::string rerun_dir;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", o.config_path, "JSON run config (defaults when omitted)");
    cmd->add_option("-s,--set", o.overrides, "Override a config entry, section.key=value (repeatable)");
    cmd->add_option("-o,--out", o.out_dir, "Run directory to write")->required();
    cmd->add_option("--threads", o.threads, "Worker threads (0 keeps the config value)");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic planted-shock cohort");
  common(gen);

  auto* train = app.add_subcommand("train", "Two-stage training");
  common(train);
  train->add_option("--stage", o.stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));
  train->add_option("--cohort", o.cohort, "Cohort file or gen-data run directory (stage 1)");
  train->add_option("--from", o.run_dir, "Stage-one run directory for --stage 2 (default --out)");

  auto* evaluate = app.add_subcommand("evaluate", "Train and test the full model per lead time");
  common(evaluate);
  evaluate->add_option("--lead-times", o.lead_times, "Comma-separated lead times in hours")
      ->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "Compare model variants on one cohort per seed");
  common(ablate);
  ablate->add_option("--variant", o.variants,
                     "Variants: full, no_cfc, no_transformer, g_only, l_only (default all)")
      ->delimiter(',');

  auto* grid = app.add_subcommand("depth-grid", "Test AUROC over CfC x transformer depths");
  common(grid);
  grid->add_option("--cfc-layers", o.cfc_layers, "Range a..b");
  grid->add_option("--transformer-layers", o.transformer_layers, "Range c..d");

  auto* explain = app.add_subcommand("explain", "Shapley attributions for a trained run");
  common(explain);
  explain->add_option("--run", o.run_dir, "Trained run directory")->required();
  auto* patient = explain->add_option("--patient", o.patient, "Patient id");
  auto* whole = explain->add_flag("--cohort", o.whole_cohort, "Test-split positives (run.explain_limit)");
  patient->excludes(whole);
  whole->excludes(patient);

  auto* align = app.add_subcommand("align-check", "Causal attention vs Shapley top-k overlap");
  common(align);
  align->add_option("--run", o.run_dir, "Trained run directory")->required();
  align->add_option("--patient", o.patient, "Patient id (default: test-split positives)");

  auto* re = app.add_subcommand("rerun", "Re-execute a run directory from its effective config");
  re->add_option("--run", rerun_dir, "Run directory holding effective_config.json")->required();
  re->add_option("-o,--out", o.out_dir, "New run directory")->required();

  std::string command_name = "ctformer";
  try {
    app.parse(argc, argv);
    CLI::App* chosen = app.get_subcommands().front();
    command_name = chosen->get_name();
    o.command = command_name;
    if (chosen == re) {
      rerun(rerun_dir, o.out_dir);
      return 0;
    }
    if (chosen == align && o.patient.empty()) o.whole_cohort = true;
    o.config_path = absolute(o.config_path);
    o.cohort = absolute(o.cohort);
    o.run_dir = absolute(o.run_dir);
    const RunConfig config = load_run_config(o.config_path, o.overrides);
    execute(o, config);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"command", command_name}, {"type", "usage"}}.dump() << '\n';
    return 2;
  } catch (const MissingArtifact& e) {
    std::cerr << json{{"error", e.what()}, {"command", command_name}, {"type", "missing_artifact"}}.dump()
              << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"command", command_name}, {"type", "failure"}}.dump() << '\n';
    return 1;
  }
}

}  // namespace ctformer::app
