// Command line front end: sequence generation, noise amplification
// tables, synthetic copy-spelling campaigns, offline re-evaluation and
// mixing-matrix sweeps. Exit codes: 0 success, 2 invalid input,
// 3 generation or convergence failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "llp/llp.hpp"

namespace fs = std::filesystem;
using namespace llp;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// Key-value configuration with [section] headers. Keys are addressed as
/// "section.key". Unknown keys are kept but ignored.
struct Config {
  std::map<std::string, std::string> values;

  static Config load(const std::string& path) {
    Config cfg;
    if (path.empty()) return cfg;
    auto in = detail::open_input(path);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']') {
          throw IoError(path + " line " + std::to_string(line_no) +
                        ": unterminated section header");
        }
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw IoError(path + " line " + std::to_string(line_no) +
                      ": expected 'key = value'");
      }
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) {
        throw IoError(path + " line " + std::to_string(line_no) +
                      ": empty key");
      }
      cfg.values[section.empty() ? key : section + "." + key] =
          trim(t.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    return detail::parse_double(it->second, "config field '" + key + "'");
  }

  long get_long(const std::string& key, long fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    return detail::parse_long(it->second, "config field '" + key + "'");
  }
};

/// Output directory resolution: --out flag, then config, then LLP_OUT_DIR.
std::string resolve_out_dir(const std::string& flag, const Config& cfg) {
  if (!flag.empty()) return flag;
  if (cfg.has("output.dir")) return cfg.get("output.dir", "");
  if (const char* env = std::getenv("LLP_OUT_DIR"); env && *env) return env;
  throw ValueError(
      "missing config field 'output.dir' (set it, or pass --out, or export "
      "LLP_OUT_DIR)");
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  return p;
}

MixingMatrix load_matrix_or_speller(const std::string& path) {
  return path.empty() ? MixingMatrix::speller() : read_mixing_file(path);
}

SymbolGrid load_grid(const Config& cfg) {
  const std::string path = cfg.get("grid.file", "");
  if (path.empty()) return SymbolGrid::standard();
  auto in = detail::open_input(path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  return grid_from_json(j);
}

MixingMatrix load_mixing(const Config& cfg, const std::string& flag) {
  if (!flag.empty()) return read_mixing_file(flag);
  const std::string path = cfg.get("mixing.file", "");
  return load_matrix_or_speller(path);
}

SequenceSpec parse_spec(const std::string& text, const std::string& where) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ValueError(where + ": expected 'length:appearances', got '" + text +
                     "'");
  }
  SequenceSpec spec;
  spec.length = static_cast<int>(
      detail::parse_long(trim(text.substr(0, colon)), where));
  spec.appearances = static_cast<int>(
      detail::parse_long(trim(text.substr(colon + 1)), where));
  return spec;
}

std::vector<SequencePlan> composition_from(const Config& cfg) {
  const SequenceSpec t1 =
      parse_spec(cfg.get("sequences.type1", "8:3"), "config field 'sequences.type1'");
  const SequenceSpec t2 =
      parse_spec(cfg.get("sequences.type2", "18:2"), "config field 'sequences.type2'");
  const long c1 = cfg.get_long("sequences.type1_count", 4);
  const long c2 = cfg.get_long("sequences.type2_count", 2);
  if (c1 < 0 || c2 < 0 || c1 + c2 == 0) {
    throw ValueError("config: sequence counts must be nonnegative, not all zero");
  }
  std::vector<SequencePlan> plans;
  for (long i = 0; i < c1; ++i) plans.push_back({t1, 1});
  for (long i = 0; i < c2; ++i) plans.push_back({t2, 2});
  return plans;
}

FilterSpec filter_spec_from(const Config& cfg) {
  FilterSpec spec;
  spec.order = static_cast<int>(cfg.get_long("preprocessing.order", 3));
  spec.low_hz = cfg.get_double("preprocessing.low_hz", 0.5);
  spec.high_hz = cfg.get_double("preprocessing.high_hz", 8.0);
  spec.stopband_attenuation_db =
      cfg.get_double("preprocessing.attenuation_db", 40.0);
  const std::string mode = cfg.get("preprocessing.edge_mode", "corner");
  if (mode == "corner") {
    spec.edge_mode = BandEdgeMode::corner;
  } else if (mode == "stopband") {
    spec.edge_mode = BandEdgeMode::stopband;
  } else {
    throw ValueError("config field 'preprocessing.edge_mode': expected "
                     "'corner' or 'stopband', got '" + mode + "'");
  }
  return spec;
}

std::vector<std::pair<double, double>> intervals_from(const Config& cfg) {
  const std::string text = cfg.get("preprocessing.intervals", "");
  if (text.empty()) return default_feature_intervals();
  std::vector<std::pair<double, double>> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto semi = text.find(';', start);
    const std::string item = trim(
        text.substr(start, semi == std::string::npos ? semi : semi - start));
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ValueError(
            "config field 'preprocessing.intervals': expected 'lo:hi' items");
      }
      out.emplace_back(detail::parse_double(trim(item.substr(0, colon)),
                                            "interval low edge"),
                       detail::parse_double(trim(item.substr(colon + 1)),
                                            "interval high edge"));
    }
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (out.empty()) {
    throw ValueError("config field 'preprocessing.intervals': empty list");
  }
  return out;
}

std::vector<std::string> drop_from(const Config& cfg) {
  if (!cfg.has("preprocessing.drop")) return default_dropped_channels();
  std::vector<std::string> out;
  const std::string text = cfg.get("preprocessing.drop", "");
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(
        text.substr(start, comma == std::string::npos ? comma : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;  // empty list means: keep every channel
}

SyntheticModel model_from(const Config& cfg) {
  const long dim = cfg.get_long("model.dim", 174);
  const long seed = cfg.get_long("model.seed", 7);
  if (dim < 1) throw ValueError("config field 'model.dim': must be >= 1");
  return default_synthetic_model(static_cast<Eigen::Index>(dim),
                                 static_cast<std::uint64_t>(seed));
}

/// Either the configured snr_scale or a scale calibrated to the
/// configured target AUC.
double resolve_snr_scale(const Config& cfg, const SyntheticModel& model,
                         bool quiet) {
  if (cfg.has("model.snr_scale")) {
    const double scale = cfg.get_double("model.snr_scale", 0.0);
    if (scale < 0.0) {
      throw ValueError("config field 'model.snr_scale': must be >= 0");
    }
    return scale;
  }
  const double target = cfg.get_double("model.target_auc", 0.97);
  CalibrationOptions opts;
  opts.n_epochs = static_cast<std::size_t>(
      cfg.get_long("model.calibration_epochs", 3400));
  opts.folds =
      static_cast<std::size_t>(cfg.get_long("model.calibration_folds", 5));
  opts.tolerance = cfg.get_double("model.calibration_tolerance", 0.005);
  opts.seed = static_cast<std::uint64_t>(
      cfg.get_long("model.calibration_seed", 12345));
  opts.max_scale = cfg.get_double("model.max_scale", 1e6);
  const double scale = calibrate_snr(model, target, opts);
  if (!quiet) {
    std::cout << "calibrated snr_scale " << scale << " for target AUC "
              << target << "\n";
  }
  return scale;
}

std::string symbol_of(const SymbolGrid& grid, int id) {
  if (id < 0 || id >= grid.cell_count()) return "NA";
  return grid.symbols[static_cast<std::size_t>(id)];
}

// ------------------------------------------------------------------- naf

int cmd_naf(const std::string& matrix_path) {
  const MixingMatrix pi = load_matrix_or_speller(matrix_path);
  const MixingReport report = validate_mixing(pi);
  if (!report.ok()) {
    throw ValueError("invalid mixing matrix: " + report.violations.front());
  }
  const InverseCoefficients coeffs = pseudoinverse(pi);
  const double naf = noise_amplification(pi);

  std::cout << "groups: " << pi.group_count() << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", naf);
  std::cout << "noise_amplification: " << buf << "\n";
  std::cout << "inverse_coefficients (rows: target mean, non-target mean):\n";
  for (Eigen::Index r = 0; r < 2; ++r) {
    std::cout << " ";
    for (Eigen::Index g = 0; g < coeffs.nu.cols(); ++g) {
      std::snprintf(buf, sizeof buf, " %9.4f", coeffs.nu(r, g));
      std::cout << buf;
    }
    std::cout << "\n";
  }
  return 0;
}

// --------------------------------------------------------- gen-sequences

int cmd_gen_sequences(const Config& cfg, const std::string& out_flag,
                      long seed, long count, bool quiet) {
  const fs::path out = ensure_dir(resolve_out_dir(out_flag, cfg));
  const SymbolGrid grid = load_grid(cfg);
  const auto composition = composition_from(cfg);
  const int max_restarts =
      static_cast<int>(cfg.get_long("sequences.max_restarts", 10000));
  if (count < 1) throw ValueError("--count must be >= 1");

  std::ofstream report(out / "validation.txt");
  if (!report) throw IoError("cannot write " + (out / "validation.txt").string());
  std::size_t violations = 0;
  for (long i = 0; i < count; ++i) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed + i));
    const Trial trial = assemble_trial(grid, rng, composition, max_restarts);

    char name[32];
    std::snprintf(name, sizeof name, "trial_%04ld.json", i);
    {
      auto file = detail::open_output((out / name).string());
      file << to_json(trial).dump(2) << "\n";
    }
    const TrialReport tr = validate_trial(grid, trial, composition);
    if (tr.ok()) {
      report << name << ": ok\n";
    } else {
      violations += tr.violations.size();
      for (const auto& v : tr.violations) report << name << ": " << v << "\n";
    }
  }
  report << count << " trials, " << violations << " violations\n";
  if (!quiet) {
    std::cout << "wrote " << count << " trials to " << out.string() << " ("
              << violations << " violations)\n";
  }
  return 0;
}

// -------------------------------------------------------------- simulate

FeatureTable table_from_session(const SessionResult& r) {
  FeatureTable table;
  std::size_t rows = 0;
  for (const auto& rec : r.records) rows += rec.epochs.size();
  const Eigen::Index d = r.records.empty() || r.records[0].epochs.empty()
                             ? 0
                             : r.records[0].epochs[0].size();
  table.features.resize(static_cast<Eigen::Index>(rows), d);
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < r.records.size(); ++t) {
    for (std::size_t s = 0; s < r.records[t].epochs.size(); ++s) {
      table.trial_index.push_back(static_cast<int>(t));
      table.stimulus_index.push_back(static_cast<int>(s));
      table.group.push_back(r.records[t].trial.stimuli[s].group);
      table.label.push_back(r.labels[t][s]);
      table.features.row(row++) = r.records[t].epochs[s].transpose();
    }
  }
  return table;
}

int cmd_simulate(const Config& cfg, const std::string& out_flag, long seed0_flag,
                 long seeds_flag, bool quiet) {
  const fs::path out = ensure_dir(resolve_out_dir(out_flag, cfg));
  const SymbolGrid grid = load_grid(cfg);
  const MixingMatrix pi = load_mixing(cfg, "");
  const auto composition = composition_from(cfg);

  SyntheticModel model = model_from(cfg);
  model.snr_scale = resolve_snr_scale(cfg, model, quiet);

  const std::string sentence = cfg.get("session.sentence", kTestSentence);
  const long seeds =
      seeds_flag > 0 ? seeds_flag : cfg.get_long("session.seeds", 1);
  const long seed0 =
      seed0_flag >= 0 ? seed0_flag : cfg.get_long("session.seed0", 1);
  if (seeds < 1) throw ValueError("--seeds must be >= 1");

  std::ofstream summary(out / "summary.csv");
  std::ofstream curve(out / "curve.csv");
  if (!summary || !curve) throw IoError("cannot write into " + out.string());
  summary << "seed,online_accuracy,post_ramp_accuracy,posthoc_accuracy,"
             "final_running_auc\n";
  curve << "seed,character,true_symbol,online_symbol,posthoc_symbol,"
           "running_auc,cumulative_online_accuracy\n";

  double sum_online = 0.0, sum_ramp = 0.0, sum_posthoc = 0.0;
  for (long s = seed0; s < seed0 + seeds; ++s) {
    SessionConfig session;
    session.sentence = sentence;
    session.seed = static_cast<std::uint64_t>(s);
    const SessionResult r = simulate_session(model, session, grid, pi,
                                             composition);

    char dir_name[32];
    std::snprintf(dir_name, sizeof dir_name, "seed_%04ld", s);
    const fs::path seed_dir = ensure_dir((out / dir_name).string());

    Json session_json;
    session_json["seed"] = r.seed;
    session_json["sentence"] = sentence;
    session_json["snr_scale"] = model.snr_scale;
    session_json["model"] = {{"dim", model.dim()},
                             {"seed", cfg.get_long("model.seed", 7)}};
    session_json["grid"] = to_json(grid);
    session_json["mixing"] = to_json(pi);
    session_json["online_accuracy"] = r.online.accuracy;
    session_json["post_ramp_accuracy"] = r.online.post_ramp_accuracy;
    session_json["posthoc_accuracy"] = r.posthoc.accuracy;
    {
      auto file = detail::open_output((seed_dir / "session.json").string());
      file << session_json.dump(2) << "\n";
    }

    std::vector<Trial> trials;
    for (const auto& rec : r.records) trials.push_back(rec.trial);
    write_trials_file((seed_dir / "trials.json").string(), trials);
    write_features_csv((seed_dir / "features.csv").string(),
                       table_from_session(r));

    std::vector<DecisionRow> decisions;
    for (std::size_t i = 0; i < r.characters.size(); ++i) {
      decisions.push_back({static_cast<int>(i),
                           symbol_of(grid, r.characters[i].online_id),
                           symbol_of(grid, r.posthoc_ids[i]),
                           symbol_of(grid, r.characters[i].true_id)});
    }
    write_decisions_csv((seed_dir / "decisions.csv").string(), decisions);

    ClassifierSnapshot snap;
    snap.w = r.final_classifier.w;
    snap.metadata = {{"seed", r.seed}, {"sentence", sentence}};
    write_classifier_file((seed_dir / "classifier.json").string(), snap);

    summary << s << "," << detail::format_double(r.online.accuracy) << ","
            << detail::format_double(r.online.post_ramp_accuracy) << ","
            << detail::format_double(r.posthoc.accuracy) << ","
            << detail::format_double(r.characters.back().running_auc) << "\n";

    int correct = 0;
    for (std::size_t i = 0; i < r.characters.size(); ++i) {
      correct += r.characters[i].online_id == r.characters[i].true_id;
      curve << s << "," << i << ","
            << detail::csv_field(symbol_of(grid, r.characters[i].true_id))
            << ","
            << detail::csv_field(symbol_of(grid, r.characters[i].online_id))
            << "," << detail::csv_field(symbol_of(grid, r.posthoc_ids[i]))
            << "," << detail::format_double(r.characters[i].running_auc) << ","
            << detail::format_double(static_cast<double>(correct) /
                                     static_cast<double>(i + 1))
            << "\n";
    }

    sum_online += r.online.accuracy;
    sum_ramp += r.online.post_ramp_accuracy;
    sum_posthoc += r.posthoc.accuracy;
  }

  if (!quiet) {
    const double n = static_cast<double>(seeds);
    std::cout << "seeds " << seeds << "  mean_online " << sum_online / n
              << "  mean_post_ramp " << sum_ramp / n << "  mean_posthoc "
              << sum_posthoc / n << "\n";
  }
  return 0;
}

// -------------------------------------------------------------- evaluate

struct MetaInfo {
  SymbolGrid grid = SymbolGrid::standard();
  MixingMatrix pi = MixingMatrix::speller();
  std::uint64_t seed = 1;
  std::string sentence;
};

MetaInfo load_meta(const std::string& path, const std::string& matrix_flag,
                   const Config& cfg) {
  MetaInfo meta;
  if (!path.empty()) {
    auto in = detail::open_input(path);
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw IoError(path + ": invalid JSON: " + e.what());
    }
    try {
      if (j.contains("grid")) meta.grid = grid_from_json(j["grid"]);
      if (j.contains("mixing")) meta.pi = mixing_from_json(j["mixing"]);
      if (j.contains("seed")) meta.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("sentence")) meta.sentence = j["sentence"].get<std::string>();
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
  } else {
    meta.grid = load_grid(cfg);
    meta.seed = static_cast<std::uint64_t>(cfg.get_long("session.seed0", 1));
  }
  if (!matrix_flag.empty()) {
    meta.pi = read_mixing_file(matrix_flag);
  } else if (path.empty()) {
    meta.pi = load_mixing(cfg, "");
  }
  return meta;
}

/// Re-runs the causal decoding loop over recorded trials: decide with the
/// classifier trained on everything before the current trial, then absorb
/// the trial and retrain. Mirrors the simulator exactly, including the
/// uniformly random guesses before the first training.
struct ReplayResult {
  std::vector<int> online_ids;
  std::vector<int> posthoc_ids;
  LinearClassifier final_classifier;
};

ReplayResult replay_decisions(const MetaInfo& meta,
                              const std::vector<Trial>& trials,
                              const FeatureTable& table) {
  std::vector<int> tags;
  for (const auto& trial : trials) {
    for (const auto& ts : trial.stimuli) {
      if (std::find(tags.begin(), tags.end(), ts.group) == tags.end()) {
        tags.push_back(ts.group);
      }
    }
  }
  std::sort(tags.begin(), tags.end());
  if (tags.size() != meta.pi.group_count()) {
    throw ValueError("evaluate: trials use " + std::to_string(tags.size()) +
                     " sequence groups, mixing matrix has " +
                     std::to_string(meta.pi.group_count()));
  }
  auto group_index = [&](int tag) {
    return static_cast<std::size_t>(
        std::find(tags.begin(), tags.end(), tag) - tags.begin());
  };

  const Eigen::Index d = table.features.cols();
  OnlineLLPState state(d, meta.pi.group_count());
  std::mt19937_64 guess_rng(meta.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<int> selectable = meta.grid.selectable();
  std::uniform_int_distribution<std::size_t> pick(0, selectable.size() - 1);

  ReplayResult result;
  LinearClassifier clf;
  bool trained = false;
  std::vector<TrialRecord> records;
  std::size_t row = 0;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const Trial& trial = trials[t];
    std::vector<FeatureVector> epochs;
    epochs.reserve(trial.size());
    for (std::size_t s = 0; s < trial.size(); ++s, ++row) {
      if (row >= table.size()) {
        throw ValueError("evaluate: feature table has fewer rows than the "
                         "trials have stimuli");
      }
      if (table.trial_index[row] != static_cast<int>(t) ||
          table.stimulus_index[row] != static_cast<int>(s)) {
        throw ValueError("evaluate: feature row " + std::to_string(row) +
                         " is out of order (expected trial " +
                         std::to_string(t) + ", stimulus " + std::to_string(s) +
                         ")");
      }
      if (table.group[row] != trial.stimuli[s].group) {
        throw ValueError("evaluate: feature row " + std::to_string(row) +
                         " group tag differs from the trial file");
      }
      epochs.push_back(table.features.row(static_cast<Eigen::Index>(row))
                           .transpose());
    }

    result.online_ids.push_back(
        trained ? select_symbol(clf, meta.grid, trial, epochs)
                : selectable[pick(guess_rng)]);

    for (std::size_t s = 0; s < trial.size(); ++s) {
      state.add(epochs[s], group_index(trial.stimuli[s].group));
    }
    clf = train_llp(state, meta.pi);
    trained = true;
    records.push_back(TrialRecord{trial, std::move(epochs)});
  }
  if (row != table.size()) {
    throw ValueError("evaluate: feature table has more rows than the trials "
                     "have stimuli");
  }
  result.final_classifier = clf;
  result.posthoc_ids = posthoc_reanalyze(clf, meta.grid, records);
  return result;
}

int cmd_evaluate(const Config& cfg, const std::string& out_flag,
                 const std::string& features_path,
                 const std::string& recording_path,
                 const std::string& markers_path,
                 const std::string& trials_path, const std::string& meta_path,
                 const std::string& matrix_flag, bool quiet) {
  if (trials_path.empty()) throw ValueError("evaluate: --trials is required");
  if (features_path.empty() == recording_path.empty()) {
    throw ValueError("evaluate: pass exactly one of --features or --recording");
  }
  if (!recording_path.empty() && markers_path.empty()) {
    throw ValueError("evaluate: --recording needs --markers");
  }
  const fs::path out = ensure_dir(resolve_out_dir(out_flag, cfg));
  const MetaInfo meta = load_meta(meta_path, matrix_flag, cfg);
  const std::vector<Trial> trials = read_trials_file(trials_path);
  if (trials.empty()) throw ValueError("evaluate: no trials in " + trials_path);

  FeatureTable table;
  if (!features_path.empty()) {
    table = read_features_csv(features_path);
  } else {
    // Raw mode: the full preprocessing chain, then homogeneity checks on
    // the baseline-corrected epochs.
    const Recording raw = read_recording_csv(recording_path);
    const std::vector<MarkerRow> markers = read_markers_csv(markers_path);

    const FilterSpec fspec = filter_spec_from(cfg);
    const Recording filtered = apply_filter(design_bandpass(fspec, raw.rate), raw);
    const double target_rate = cfg.get_double("preprocessing.downsample_to", 100.0);
    const double ratio = raw.rate / target_rate;
    const int factor = static_cast<int>(std::lround(ratio));
    if (factor < 1 || std::abs(ratio - factor) > 1e-6) {
      throw ValueError("config field 'preprocessing.downsample_to': " +
                       std::to_string(raw.rate) + " Hz is not an integer "
                       "multiple of the target rate");
    }
    const Recording ds = downsample(filtered, factor);

    std::vector<std::size_t> onsets;
    for (const auto& m : markers) {
      onsets.push_back(downsample_index(m.sample_index, factor));
    }
    const double ep_lo = cfg.get_double("preprocessing.epoch_lo_ms", -200.0);
    const double ep_hi = cfg.get_double("preprocessing.epoch_hi_ms", 700.0);
    std::vector<Epoch> epochs = extract_epochs(ds, onsets, ep_lo, ep_hi);
    const double base_lo = cfg.get_double("preprocessing.baseline_lo_ms", -200.0);
    const double base_hi = cfg.get_double("preprocessing.baseline_hi_ms", 0.0);
    for (auto& e : epochs) e = baseline_correct(e, base_lo, base_hi);

    std::size_t expected = 0;
    for (const auto& t : trials) expected += t.size();
    if (epochs.size() != expected) {
      throw ValueError("evaluate: " + std::to_string(markers.size()) +
                       " markers but the trials have " +
                       std::to_string(expected) + " stimuli");
    }

    const auto intervals = intervals_from(cfg);
    const auto drop = drop_from(cfg);
    Eigen::Index row = 0;
    std::size_t k = 0;
    for (std::size_t t = 0; t < trials.size(); ++t) {
      for (std::size_t s = 0; s < trials[t].size(); ++s, ++k) {
        const FeatureVector f = interval_features(epochs[k], intervals, drop);
        if (table.features.rows() == 0) {
          table.features.resize(static_cast<Eigen::Index>(expected), f.size());
        }
        table.trial_index.push_back(static_cast<int>(t));
        table.stimulus_index.push_back(static_cast<int>(s));
        table.group.push_back(markers[k].group);
        table.label.push_back(markers[k].label);
        table.features.row(row++) = f.transpose();
      }
    }
    write_features_csv((out / "features.csv").string(), table);

    // Homogeneity of each class across the two sequence groups, on the
    // post-stimulus window.
    bool labelled = true;
    for (const auto& m : markers) labelled = labelled && m.label != 0;
    if (labelled) {
      const double win_lo = cfg.get_double("preprocessing.window_lo_ms", 0.0);
      const double win_hi = cfg.get_double("preprocessing.window_hi_ms", 700.0);
      std::vector<int> tags;
      for (const auto& m : markers) {
        if (std::find(tags.begin(), tags.end(), m.group) == tags.end()) {
          tags.push_back(m.group);
        }
      }
      std::sort(tags.begin(), tags.end());
      std::ofstream hom(out / "homogeneity.csv");
      if (!hom) throw IoError("cannot write into " + out.string());
      hom << "class,t_statistic,p_value,n,mean_own_distance,"
             "mean_other_distance\n";
      if (tags.size() == 2) {
        for (const Label cls : {1, -1}) {
          std::vector<Epoch> g1, g2;
          for (std::size_t k2 = 0; k2 < epochs.size(); ++k2) {
            if (markers[k2].label != cls) continue;
            (markers[k2].group == tags[0] ? g1 : g2).push_back(epochs[k2]);
          }
          const HomogeneityEntry h =
              bootstrap_homogeneity(g1, g2, win_lo, win_hi);
          hom << (cls == 1 ? "target" : "nontarget") << ","
              << detail::format_double(h.t_statistic) << ","
              << detail::format_double(h.p_value) << "," << h.n << ","
              << detail::format_double(h.mean_own_distance) << ","
              << detail::format_double(h.mean_other_distance) << "\n";
        }
      }
    }
  }

  const ReplayResult replay = replay_decisions(meta, trials, table);

  std::vector<DecisionRow> decisions;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const std::string truth =
        t < meta.sentence.size() ? std::string(1, meta.sentence[t])
                                 : std::string("NA");
    decisions.push_back({static_cast<int>(t),
                         symbol_of(meta.grid, replay.online_ids[t]),
                         symbol_of(meta.grid, replay.posthoc_ids[t]), truth});
  }
  write_decisions_csv((out / "decisions.csv").string(), decisions);

  Json metrics;
  metrics["trials"] = trials.size();
  metrics["dim"] = table.features.cols();

  bool labelled = table.size() > 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    labelled = labelled && table.label[i] != 0;
  }
  if (labelled) {
    std::vector<double> scores;
    for (Eigen::Index i = 0; i < table.features.rows(); ++i) {
      scores.push_back(score_epoch(replay.final_classifier,
                                   table.features.row(i).transpose()));
    }
    metrics["group_mean_final_auc"] = auc(scores, table.label);
    const long folds = cfg.get_long("preprocessing.cv_folds", 5);
    const CvResult cv =
        chronological_cv(table.features, table.label,
                         static_cast<std::size_t>(folds), supervised_trainer());
    metrics["supervised_cv_auc"] = cv.mean_auc;
    metrics["supervised_cv_skipped_folds"] = cv.skipped_folds;
  }
  if (!meta.sentence.empty() && meta.sentence.size() == trials.size()) {
    std::vector<int> truth;
    for (const char c : meta.sentence) {
      truth.push_back(meta.grid.id_of(std::string(1, c)));
    }
    const AccuracyResult online = character_accuracy(replay.online_ids, truth);
    const AccuracyResult posthoc =
        character_accuracy(replay.posthoc_ids, truth);
    metrics["online_accuracy"] = online.accuracy;
    metrics["post_ramp_accuracy"] = online.post_ramp_accuracy;
    metrics["posthoc_accuracy"] = posthoc.accuracy;
  }
  {
    auto file = detail::open_output((out / "metrics.json").string());
    file << metrics.dump(2) << "\n";
  }
  if (!quiet) {
    std::cout << "evaluated " << trials.size() << " trials into "
              << out.string() << "\n";
    if (labelled) {
      std::cout << "  supervised_cv_auc " << metrics["supervised_cv_auc"]
                << "  group_mean_final_auc "
                << metrics["group_mean_final_auc"] << "\n";
    } else {
      std::cout << "  labels missing: supervised metrics skipped\n";
    }
  }
  return 0;
}

// ------------------------------------------------------------- naf-sweep

std::vector<MixingMatrix> load_candidates(const std::vector<std::string>& paths) {
  if (paths.empty()) return default_sweep_candidates();
  std::vector<MixingMatrix> out;
  for (const auto& path : paths) {
    auto in = detail::open_input(path);
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw IoError(path + ": invalid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("matrices")) {
      if (!j["matrices"].is_array()) {
        throw IoError(path + ": 'matrices' must be an array");
      }
      for (const auto& m : j["matrices"]) out.push_back(mixing_from_json(m));
    } else {
      out.push_back(mixing_from_json(j));
    }
  }
  return out;
}

std::string matrix_key(const MixingMatrix& pi) {
  std::string key;
  for (std::size_t g = 0; g < pi.rows.size(); ++g) {
    if (g) key += ";";
    key += detail::format_double(pi.rows[g][0]) + ":" +
           detail::format_double(pi.rows[g][1]);
  }
  return key;
}

int cmd_naf_sweep(const Config& cfg, const std::string& out_flag,
                  const std::vector<std::string>& matrix_paths,
                  long seeds_flag, bool quiet) {
  const fs::path out = ensure_dir(resolve_out_dir(out_flag, cfg));
  const std::vector<MixingMatrix> candidates = load_candidates(matrix_paths);
  if (candidates.empty()) {
    throw ValueError("naf-sweep: the candidate matrix list is empty");
  }

  SyntheticModel model = model_from(cfg);
  model.snr_scale = resolve_snr_scale(cfg, model, quiet);

  const auto n_epochs =
      static_cast<std::size_t>(cfg.get_long("sweep.epochs", 3400));
  const auto seeds = static_cast<std::size_t>(
      seeds_flag > 0 ? seeds_flag : cfg.get_long("sweep.seeds", 50));
  const auto test_epochs =
      static_cast<std::size_t>(cfg.get_long("sweep.test_epochs", 1000));
  const auto seed0 =
      static_cast<std::uint64_t>(cfg.get_long("sweep.seed0", 1000));

  std::vector<SweepPoint> points;
  for (const auto& pi : candidates) {
    points.push_back(sweep_matrix(model, pi, n_epochs, seeds, seed0,
                                  test_epochs));
  }
  std::sort(points.begin(), points.end(),
            [](const SweepPoint& a, const SweepPoint& b) {
              return a.naf < b.naf;
            });

  std::ofstream csv(out / "sweep.csv");
  if (!csv) throw IoError("cannot write into " + out.string());
  csv << "matrix,groups,naf,mean_rmse,mean_auc\n";
  for (const auto& p : points) {
    csv << matrix_key(p.matrix) << "," << p.matrix.group_count() << ","
        << detail::format_double(p.naf) << ","
        << detail::format_double(p.mean_rmse) << ","
        << detail::format_double(p.mean_auc) << "\n";
  }
  if (!quiet) {
    std::cout << "swept " << points.size() << " matrices over " << seeds
              << " seeds into " << (out / "sweep.csv").string() << "\n";
    for (const auto& p : points) {
      std::cout << "  naf " << p.naf << "  rmse " << p.mean_rmse << "  auc "
                << p.mean_auc << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-proportion ERP decoding toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool quiet = false;
  std::string naf_matrix;
  long gen_seed = 1, gen_count = 10;
  long sim_seed = -1, sim_seeds = -1;
  long sweep_seeds = -1;
  std::string features_path, recording_path, markers_path, trials_path,
      meta_path, ev_matrix;
  std::vector<std::string> sweep_matrices;

  CLI::App* naf = app.add_subcommand(
      "naf", "Noise amplification and inverse coefficients of a mixing matrix");
  naf->add_option("--matrix", naf_matrix,
                  "Mixing matrix JSON (default: the 8/18 speller matrix)");

  CLI::App* gen = app.add_subcommand("gen-sequences",
                                     "Generate speller trials as JSON files");
  gen->add_option("--config", config_path, "Experiment config file");
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--seed", gen_seed, "Base seed (trial i uses seed + i)");
  gen->add_option("--count", gen_count, "Number of trials");
  gen->add_flag("--quiet", quiet, "Suppress progress output");

  CLI::App* sim = app.add_subcommand(
      "simulate", "Run synthetic copy-spelling sessions and export them");
  sim->add_option("--config", config_path, "Experiment config file");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--seed", sim_seed, "First session seed");
  sim->add_option("--seeds", sim_seeds, "Number of sessions");
  sim->add_flag("--quiet", quiet, "Suppress progress output");

  CLI::App* ev = app.add_subcommand(
      "evaluate", "Replay exported sessions or preprocess raw recordings");
  ev->add_option("--config", config_path, "Experiment config file");
  ev->add_option("--out", out_dir, "Output directory");
  ev->add_option("--features", features_path, "Feature table CSV");
  ev->add_option("--recording", recording_path, "Continuous recording CSV");
  ev->add_option("--markers", markers_path, "Stimulus marker CSV");
  ev->add_option("--trials", trials_path, "Trials JSON file");
  ev->add_option("--meta", meta_path,
                 "Session metadata JSON (grid, matrix, seed, sentence)");
  ev->add_option("--matrix", ev_matrix, "Mixing matrix JSON override");
  ev->add_flag("--quiet", quiet, "Suppress progress output");

  CLI::App* sweep = app.add_subcommand(
      "naf-sweep", "Reconstruction quality across candidate mixing matrices");
  sweep->add_option("--config", config_path, "Experiment config file");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--matrix", sweep_matrices,
                    "Candidate matrix JSON file (repeatable; file may hold a "
                    "'matrices' array). Default: built-in candidates");
  sweep->add_option("--seeds", sweep_seeds, "Seeds per matrix");
  sweep->add_flag("--quiet", quiet, "Suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const Config cfg = Config::load(config_path);
    if (naf->parsed()) return cmd_naf(naf_matrix);
    if (gen->parsed()) {
      return cmd_gen_sequences(cfg, out_dir, gen_seed, gen_count, quiet);
    }
    if (sim->parsed()) {
      return cmd_simulate(cfg, out_dir, sim_seed, sim_seeds, quiet);
    }
    if (ev->parsed()) {
      return cmd_evaluate(cfg, out_dir, features_path, recording_path,
                          markers_path, trials_path, meta_path, ev_matrix,
                          quiet);
    }
    if (sweep->parsed()) {
      return cmd_naf_sweep(cfg, out_dir, sweep_matrices, sweep_seeds, quiet);
    }
  } catch (const GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
