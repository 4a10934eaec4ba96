#include "ctformer/data/cohort_io.h"

#include <fstream>
#include <set>
#include <stdexcept>

namespace ctformer::data {

using nlohmann::json;

namespace {

template <typename T>
json grid_to_json(const Grid<T>& g) {
  json rows = json::array();
  for (std::size_t r = 0; r < g.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < g.cols; ++c) row.push_back(g(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
Grid<T> grid_from_json(const json& j, std::size_t rows, std::size_t cols, const char* field) {
  if (!j.is_array() || j.size() != rows) {
    throw std::runtime_error(std::string(field) + ": expected " + std::to_string(rows) + " rows");
  }
  Grid<T> g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw std::runtime_error(std::string(field) + ": row " + std::to_string(r) + " has wrong width");
    }
    for (std::size_t c = 0; c < cols; ++c) g(r, c) = j[r][c].get<T>();
  }
  return g;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw std::runtime_error(std::string(what) + ": expected an object");
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw std::runtime_error(std::string(what) + ": unknown key '" + item.key() + "'");
    }
  }
}

}  // namespace

json to_json(const SyntheticConfig& c) {
  return json{{"n_patients", c.n_patients},
              {"n_features", c.n_features},
              {"t_max", c.t_max},
              {"target_prevalence", c.target_prevalence},
              {"missing_rate", c.missing_rate},
              {"lead_time_hours", c.lead_time_hours},
              {"shock_magnitude", c.shock_magnitude},
              {"shock_ramp_hours", c.shock_ramp_hours},
              {"decoy_rate", c.decoy_rate},
              {"chronic_risk_coupling", c.chronic_risk_coupling},
              {"rng_seed", c.rng_seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  reject_unknown(j,
                 {"n_patients", "n_features", "t_max", "target_prevalence", "missing_rate",
                  "lead_time_hours", "shock_magnitude", "shock_ramp_hours", "decoy_rate",
                  "chronic_risk_coupling", "rng_seed"},
                 "data config");
  SyntheticConfig c;
  c.n_patients = j.value("n_patients", c.n_patients);
  c.n_features = j.value("n_features", c.n_features);
  c.t_max = j.value("t_max", c.t_max);
  c.target_prevalence = j.value("target_prevalence", c.target_prevalence);
  c.missing_rate = j.value("missing_rate", c.missing_rate);
  c.lead_time_hours = j.value("lead_time_hours", c.lead_time_hours);
  c.shock_magnitude = j.value("shock_magnitude", c.shock_magnitude);
  c.shock_ramp_hours = j.value("shock_ramp_hours", c.shock_ramp_hours);
  c.decoy_rate = j.value("decoy_rate", c.decoy_rate);
  c.chronic_risk_coupling = j.value("chronic_risk_coupling", c.chronic_risk_coupling);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  return c;
}

json to_json(const PatientSequence& seq) {
  json j{{"patient_id", seq.patient_id},
         {"t_valid", seq.t_valid},
         {"t_max", seq.t_max()},
         {"n_features", seq.n_features()},
         {"label", seq.label},
         {"timestamps", seq.timestamps},
         {"values", grid_to_json(seq.values)},
         {"obs_mask", grid_to_json(seq.obs_mask)},
         {"feature_delta", grid_to_json(seq.feature_delta)},
         {"step_delta", seq.step_delta}};
  j["onset_index"] = seq.onset_index ? json(*seq.onset_index) : json(nullptr);
  j["onset_hour"] = seq.onset_hour ? json(*seq.onset_hour) : json(nullptr);
  if (seq.raw_series) {
    j["raw_series"] = json{{"timestamps", seq.raw_series->timestamps},
                           {"creatinine", seq.raw_series->creatinine},
                           {"urine_rate", seq.raw_series->urine_rate}};
  } else {
    j["raw_series"] = nullptr;
  }
  return j;
}

PatientSequence patient_from_json(const json& j) {
  reject_unknown(j,
                 {"patient_id", "t_valid", "t_max", "n_features", "label", "timestamps", "values",
                  "obs_mask", "feature_delta", "step_delta", "onset_index", "onset_hour",
                  "raw_series"},
                 "patient");
  PatientSequence seq;
  seq.patient_id = j.at("patient_id").get<std::string>();
  seq.t_valid = j.at("t_valid").get<std::size_t>();
  const auto t_max = j.at("t_max").get<std::size_t>();
  const auto n_features = j.at("n_features").get<std::size_t>();
  seq.label = j.at("label").get<int>();
  seq.timestamps = j.at("timestamps").get<std::vector<double>>();
  seq.values = grid_from_json<double>(j.at("values"), t_max, n_features, "values");
  seq.obs_mask = grid_from_json<std::uint8_t>(j.at("obs_mask"), t_max, n_features, "obs_mask");
  seq.feature_delta =
      grid_from_json<double>(j.at("feature_delta"), t_max, n_features, "feature_delta");
  seq.step_delta = j.at("step_delta").get<std::vector<double>>();
  if (j.contains("onset_index") && !j["onset_index"].is_null()) {
    seq.onset_index = j["onset_index"].get<std::size_t>();
  }
  if (j.contains("onset_hour") && !j["onset_hour"].is_null()) {
    seq.onset_hour = j["onset_hour"].get<double>();
  }
  if (j.contains("raw_series") && !j["raw_series"].is_null()) {
    const json& r = j["raw_series"];
    seq.raw_series = RawSeries{r.at("timestamps").get<std::vector<double>>(),
                               r.at("creatinine").get<std::vector<double>>(),
                               r.at("urine_rate").get<std::vector<double>>()};
  }
  validate(seq);
  return seq;
}

json to_json(const NormalizationStats& stats) {
  return json{{"mean", stats.mean}, {"std", stats.stddev}, {"degenerate", stats.degenerate}};
}

NormalizationStats normalization_from_json(const json& j) {
  return NormalizationStats{j.at("mean").get<std::vector<double>>(),
                            j.at("std").get<std::vector<double>>(),
                            j.at("degenerate").get<std::vector<std::uint8_t>>()};
}

void save_cohort(const std::string& path, const Cohort& cohort) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_cohort: cannot open " + path);
  json header{{"schema_version", kCohortSchemaVersion}};
  header["config"] = cohort.config ? to_json(*cohort.config) : json(nullptr);
  out << header.dump() << '\n';
  for (const PatientSequence& seq : cohort.patients) out << to_json(seq).dump() << '\n';
  if (!out) throw std::runtime_error("save_cohort: write failed for " + path);
}

Cohort load_cohort(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cohort: cannot open " + path);
  Cohort cohort;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (!header_seen) {
        header_seen = true;
        if (j.value("schema_version", -1) != kCohortSchemaVersion) {
          throw std::runtime_error("unsupported or missing schema_version");
        }
        if (!j.at("config").is_null()) cohort.config = synthetic_config_from_json(j["config"]);
        continue;
      }
      cohort.patients.push_back(patient_from_json(j));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_cohort: " + path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return cohort;
}

}  // namespace ctformer::data
