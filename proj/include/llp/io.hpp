#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "llp/common.hpp"
#include "llp/decoder.hpp"
#include "llp/mixing.hpp"
#include "llp/sequence.hpp"
#include "llp/signal.hpp"

namespace llp {

using Json = nlohmann::json;

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Splits one CSV line; fields containing separators or quotes are
/// expected in double quotes with "" escaping.
inline std::vector<std::string> split_csv(const std::string& line,
                                          const std::string& where) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw IoError(where + ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not a number: '" + s + "'");
  }
}

inline long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not an integer: '" + s + "'");
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- mixing

inline Json to_json(const MixingMatrix& m) {
  Json rows = Json::array();
  for (const auto& r : m.rows) rows.push_back({r[0], r[1]});
  return Json{{"rows", rows}};
}

inline MixingMatrix mixing_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j["rows"].is_array()) {
    throw IoError("mixing matrix: expected an object with a 'rows' array");
  }
  MixingMatrix m;
  for (const auto& row : j["rows"]) {
    if (!row.is_array() || row.size() != 2 || !row[0].is_number() ||
        !row[1].is_number()) {
      throw IoError("mixing matrix: every row must hold two numbers");
    }
    m.rows.push_back({row[0].get<double>(), row[1].get<double>()});
  }
  const MixingReport report = validate_mixing(m);
  if (!report.ok()) {
    throw IoError("mixing matrix: " + report.violations.front());
  }
  return m;
}

inline MixingMatrix read_mixing_file(const std::string& path) {
  auto in = detail::open_input(path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  return mixing_from_json(j);
}

// ------------------------------------------------------------------ grid

inline Json to_json(const SymbolGrid& g) {
  return Json{{"rows", g.rows}, {"cols", g.cols}, {"symbols", g.symbols}};
}

inline SymbolGrid grid_from_json(const Json& j) {
  SymbolGrid g;
  try {
    g.rows = j.at("rows").get<int>();
    g.cols = j.at("cols").get<int>();
    g.symbols = j.at("symbols").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw IoError(std::string("grid: ") + e.what());
  }
  const auto errors = validate_grid(g);
  if (!errors.empty()) throw IoError("grid: " + errors.front());
  return g;
}

// ----------------------------------------------------------------- trial

inline Json to_json(const Trial& t) {
  Json stimuli = Json::array();
  for (const auto& ts : t.stimuli) {
    stimuli.push_back(Json{{"group", ts.group},
                           {"sequence", ts.sequence},
                           {"highlighted", ts.stimulus.highlighted}});
  }
  return Json{{"stimuli", stimuli}};
}

inline Trial trial_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("stimuli") || !j["stimuli"].is_array()) {
    throw IoError("trial: expected an object with a 'stimuli' array");
  }
  Trial t;
  for (const auto& s : j["stimuli"]) {
    TrialStimulus ts;
    try {
      ts.group = s.at("group").get<int>();
      ts.stimulus.highlighted = s.at("highlighted").get<std::vector<int>>();
      ts.sequence = s.value("sequence", -1);
    } catch (const Json::exception& e) {
      throw IoError(std::string("trial stimulus: ") + e.what());
    }
    std::sort(ts.stimulus.highlighted.begin(), ts.stimulus.highlighted.end());
    t.stimuli.push_back(std::move(ts));
  }
  return t;
}

inline void write_trials_file(const std::string& path,
                              const std::vector<Trial>& trials) {
  Json arr = Json::array();
  for (const auto& t : trials) arr.push_back(to_json(t));
  auto out = detail::open_output(path);
  out << Json{{"trials", arr}}.dump(2) << "\n";
}

inline std::vector<Trial> read_trials_file(const std::string& path) {
  auto in = detail::open_input(path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  const Json* arr = nullptr;
  if (j.is_array()) {
    arr = &j;
  } else if (j.is_object() && j.contains("trials") && j["trials"].is_array()) {
    arr = &j["trials"];
  } else {
    throw IoError(path + ": expected a trial array or {\"trials\": [...]}");
  }
  std::vector<Trial> out;
  for (const auto& t : *arr) out.push_back(trial_from_json(t));
  return out;
}

// ------------------------------------------------------------- recording

inline void write_recording_csv(const std::string& path, const Recording& rec) {
  auto out = detail::open_output(path);
  out << "time_ms";
  for (const auto& ch : rec.channels) out << "," << detail::csv_field(ch);
  out << "\n";
  for (Eigen::Index t = 0; t < rec.sample_count(); ++t) {
    out << detail::format_double(1000.0 * static_cast<double>(t) / rec.rate);
    for (Eigen::Index c = 0; c < rec.channel_count(); ++c) {
      out << "," << detail::format_double(rec.samples(c, t));
    }
    out << "\n";
  }
}

/// Reads `time_ms,<channels...>` rows; the rate is inferred from the time
/// column, which must be uniformly spaced.
inline Recording read_recording_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  auto header = detail::split_csv(line, path + ": line 1");
  if (header.size() < 2 || header[0] != "time_ms") {
    throw IoError(path + ": line 1: header must start with time_ms and list "
                         "at least one channel");
  }
  Recording rec;
  rec.channels.assign(header.begin() + 1, header.end());

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    const auto fields = detail::split_csv(line, where);
    if (fields.size() != header.size()) {
      throw IoError(where + ": has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
    }
    times.push_back(detail::parse_double(fields[0], where));
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      row.push_back(detail::parse_double(fields[i], where));
    }
    rows.push_back(std::move(row));
  }
  if (times.size() < 2) throw IoError(path + ": needs at least 2 samples");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw IoError(path + ": time column must increase");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs(times[i] - times[i - 1] - dt) > 1e-6 * std::max(1.0, dt)) {
      throw IoError(path + ": line " + std::to_string(i + 2) +
                    ": time column is not uniformly spaced");
    }
  }
  rec.rate = 1000.0 / dt;
  rec.samples.resize(static_cast<Eigen::Index>(rec.channels.size()),
                     static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < rows[t].size(); ++c) {
      rec.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) =
          rows[t][c];
    }
  }
  return rec;
}

// --------------------------------------------------------------- markers

/// One stimulus marker: where it sits in the recording, which symbol was
/// attended (copy-spelling ground truth), the group of its sequence, and
/// the label when known (0 encodes NA).
struct MarkerRow {
  std::size_t sample_index = 0;
  std::string symbol;
  int group = 1;
  Label label = 0;
};

inline void write_markers_csv(const std::string& path,
                              const std::vector<MarkerRow>& markers) {
  auto out = detail::open_output(path);
  out << "sample_index,symbol,group,label\n";
  for (const auto& m : markers) {
    out << m.sample_index << "," << detail::csv_field(m.symbol) << ","
        << m.group << ","
        << (m.label == 0 ? std::string("NA") : std::to_string(m.label))
        << "\n";
  }
}

inline std::vector<MarkerRow> read_markers_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (detail::split_csv(line, path) !=
      std::vector<std::string>{"sample_index", "symbol", "group", "label"}) {
    throw IoError(path + ": line 1: expected header "
                         "sample_index,symbol,group,label");
  }
  std::vector<MarkerRow> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    const auto fields = detail::split_csv(line, where);
    if (fields.size() != 4) {
      throw IoError(where + ": has " + std::to_string(fields.size()) +
                    " fields, expected 4");
    }
    MarkerRow m;
    const long idx = detail::parse_long(fields[0], where);
    if (idx < 0) throw IoError(where + ": negative sample index");
    m.sample_index = static_cast<std::size_t>(idx);
    m.symbol = fields[1];
    m.group = static_cast<int>(detail::parse_long(fields[2], where));
    if (fields[3] == "NA") {
      m.label = 0;
    } else {
      const long l = detail::parse_long(fields[3], where);
      if (l != 1 && l != -1) {
        throw IoError(where + ": label must be 1, -1 or NA");
      }
      m.label = static_cast<Label>(l);
    }
    out.push_back(std::move(m));
  }
  return out;
}

// -------------------------------------------------------------- features

/// Feature vectors plus the marker bookkeeping they came from.
struct FeatureTable {
  std::vector<int> trial_index;
  std::vector<int> stimulus_index;
  std::vector<int> group;
  std::vector<Label> label;  // 0 encodes NA
  Eigen::MatrixXd features;  // one row per epoch

  std::size_t size() const { return trial_index.size(); }
};

inline void write_features_csv(const std::string& path,
                               const FeatureTable& table) {
  auto out = detail::open_output(path);
  out << "trial_index,stimulus_index,group,label";
  for (Eigen::Index j = 0; j < table.features.cols(); ++j) {
    out << ",f" << j;
  }
  out << "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.trial_index[i] << "," << table.stimulus_index[i] << ","
        << table.group[i] << ","
        << (table.label[i] == 0 ? std::string("NA")
                                : std::to_string(table.label[i]));
    for (Eigen::Index j = 0; j < table.features.cols(); ++j) {
      out << ","
          << detail::format_double(
                 table.features(static_cast<Eigen::Index>(i), j));
    }
    out << "\n";
  }
}

inline FeatureTable read_features_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = detail::split_csv(line, path + ": line 1");
  if (header.size() < 5 || header[0] != "trial_index" ||
      header[1] != "stimulus_index" || header[2] != "group" ||
      header[3] != "label") {
    throw IoError(path + ": line 1: expected header trial_index,"
                         "stimulus_index,group,label,f0,...");
  }
  const std::size_t dim = header.size() - 4;

  FeatureTable t;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    const auto fields = detail::split_csv(line, where);
    if (fields.size() != header.size()) {
      throw IoError(where + ": has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
    }
    t.trial_index.push_back(
        static_cast<int>(detail::parse_long(fields[0], where)));
    t.stimulus_index.push_back(
        static_cast<int>(detail::parse_long(fields[1], where)));
    t.group.push_back(static_cast<int>(detail::parse_long(fields[2], where)));
    if (fields[3] == "NA") {
      t.label.push_back(0);
    } else {
      const long l = detail::parse_long(fields[3], where);
      if (l != 1 && l != -1) {
        throw IoError(where + ": label must be 1, -1 or NA");
      }
      t.label.push_back(static_cast<Label>(l));
    }
    std::vector<double> row;
    for (std::size_t j = 4; j < fields.size(); ++j) {
      row.push_back(detail::parse_double(fields[j], where));
    }
    rows.push_back(std::move(row));
  }
  t.features.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      t.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return t;
}

// ------------------------------------------------------------ classifier

struct ClassifierSnapshot {
  Eigen::VectorXd w;
  double gamma = 0.0;
  double target_scale = 0.0;
  Json metadata = Json::object();
};

inline Json to_json(const ClassifierSnapshot& c) {
  std::vector<double> w(c.w.data(), c.w.data() + c.w.size());
  return Json{{"w", w},
              {"gamma", c.gamma},
              {"target_scale", c.target_scale},
              {"dim", c.w.size()},
              {"metadata", c.metadata}};
}

inline ClassifierSnapshot classifier_from_json(const Json& j) {
  ClassifierSnapshot c;
  try {
    const auto w = j.at("w").get<std::vector<double>>();
    c.w = Eigen::Map<const Eigen::VectorXd>(w.data(),
                                            static_cast<Eigen::Index>(w.size()));
    c.gamma = j.at("gamma").get<double>();
    c.target_scale = j.at("target_scale").get<double>();
    c.metadata = j.value("metadata", Json::object());
    if (j.contains("dim") &&
        j["dim"].get<Eigen::Index>() != c.w.size()) {
      throw IoError("classifier: dim does not match w");
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("classifier: ") + e.what());
  }
  return c;
}

inline void write_classifier_file(const std::string& path,
                                  const ClassifierSnapshot& c) {
  auto out = detail::open_output(path);
  out << to_json(c).dump(2) << "\n";
}

inline ClassifierSnapshot read_classifier_file(const std::string& path) {
  auto in = detail::open_input(path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  return classifier_from_json(j);
}

// ------------------------------------------------------------- decisions

struct DecisionRow {
  int trial_index = 0;
  std::string online_symbol;
  std::string posthoc_symbol;
  std::string true_symbol;
};

inline void write_decisions_csv(const std::string& path,
                                const std::vector<DecisionRow>& rows) {
  auto out = detail::open_output(path);
  out << "trial_index,online_symbol,posthoc_symbol,true_symbol\n";
  for (const auto& r : rows) {
    out << r.trial_index << "," << detail::csv_field(r.online_symbol) << ","
        << detail::csv_field(r.posthoc_symbol) << ","
        << detail::csv_field(r.true_symbol) << "\n";
  }
}

inline std::vector<DecisionRow> read_decisions_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (detail::split_csv(line, path) !=
      std::vector<std::string>{"trial_index", "online_symbol",
                               "posthoc_symbol", "true_symbol"}) {
    throw IoError(path + ": line 1: expected header trial_index,"
                         "online_symbol,posthoc_symbol,true_symbol");
  }
  std::vector<DecisionRow> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    const auto fields = detail::split_csv(line, where);
    if (fields.size() != 4) {
      throw IoError(where + ": has " + std::to_string(fields.size()) +
                    " fields, expected 4");
    }
    DecisionRow r;
    r.trial_index = static_cast<int>(detail::parse_long(fields[0], where));
    r.online_symbol = fields[1];
    r.posthoc_symbol = fields[2];
    r.true_symbol = fields[3];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace llp
