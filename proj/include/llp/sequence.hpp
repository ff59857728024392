#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "llp/common.hpp"

namespace llp {

/// Symbols highlighted together in one stimulus event.
inline constexpr int kHighlightCount = 12;

/// Rectangular speller layout. Cells showing "#" are visual blanks: they
/// can be highlighted but never convey information and cannot be spelled.
struct SymbolGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::string> symbols;  // row-major, rows * cols entries

  int cell_count() const { return rows * cols; }
  bool is_blank(int id) const {
    return symbols[static_cast<std::size_t>(id)] == "#";
  }

  std::vector<int> selectable() const {
    std::vector<int> out;
    for (int id = 0; id < cell_count(); ++id) {
      if (!is_blank(id)) out.push_back(id);
    }
    return out;
  }

  std::vector<int> blanks() const {
    std::vector<int> out;
    for (int id = 0; id < cell_count(); ++id) {
      if (is_blank(id)) out.push_back(id);
    }
    return out;
  }

  /// Id of a selectable symbol, -1 when absent or blank.
  int id_of(const std::string& symbol) const {
    if (symbol == "#") return -1;
    for (int id = 0; id < cell_count(); ++id) {
      if (symbols[static_cast<std::size_t>(id)] == symbol) return id;
    }
    return -1;
  }

  /// Ids of the 4-neighbourhood of a cell.
  std::vector<int> neighbours(int id) const {
    const int r = id / cols;
    const int c = id % cols;
    std::vector<int> out;
    if (r > 0) out.push_back(id - cols);
    if (r + 1 < rows) out.push_back(id + cols);
    if (c > 0) out.push_back(id - 1);
    if (c + 1 < cols) out.push_back(id + 1);
    return out;
  }

  /// 6 x 7 layout with 32 selectable symbols and 10 blanks.
  static SymbolGrid standard() {
    SymbolGrid g;
    g.rows = 6;
    g.cols = 7;
    const std::string cells =
        "ABCDEFG"
        "HIJKLMN"
        "OPQRSTU"
        "VWXYZ_."
        ",!?<###"
        "#######";
    for (const char c : cells) g.symbols.emplace_back(1, c);
    return g;
  }
};

inline std::vector<std::string> validate_grid(const SymbolGrid& grid) {
  std::vector<std::string> violations;
  if (grid.rows < 1 || grid.cols < 1) {
    violations.push_back("grid dimensions must be positive");
    return violations;
  }
  if (static_cast<int>(grid.symbols.size()) != grid.cell_count()) {
    violations.push_back("symbol list does not match rows * cols");
    return violations;
  }
  std::vector<std::string> seen;
  for (int id = 0; id < grid.cell_count(); ++id) {
    const auto& s = grid.symbols[static_cast<std::size_t>(id)];
    if (s.empty()) violations.push_back("cell " + std::to_string(id) + " is empty");
    if (s == "#") continue;
    if (std::find(seen.begin(), seen.end(), s) != seen.end()) {
      violations.push_back("duplicate selectable symbol '" + s + "'");
    }
    seen.push_back(s);
  }
  if (seen.empty()) violations.push_back("no selectable symbols");
  return violations;
}

/// One highlighting event: ids of the cells lit together, sorted.
struct Stimulus {
  std::vector<int> highlighted;

  bool contains(int id) const {
    return std::binary_search(highlighted.begin(), highlighted.end(), id);
  }
};

/// Shape of one stimulation sequence: `length` stimuli in which every
/// selectable symbol is highlighted exactly `appearances` times.
struct SequenceSpec {
  int length = 0;
  int appearances = 0;

  /// Dense sequence: 8 stimuli, every selectable symbol 3 times, no blanks
  /// (with 32 selectable symbols).
  static SequenceSpec type1() { return {8, 3}; }

  /// Sparse sequence: 18 stimuli, every selectable symbol twice; blanks
  /// pad the remaining highlight slots.
  static SequenceSpec type2() { return {18, 2}; }
};

/// A trial interleaves several sequences; each keeps a group tag that
/// determines its target proportion once a symbol is attended.
struct SequencePlan {
  SequenceSpec spec;
  int group = 1;
};

/// Standard trial: 4 dense sequences (group 1) and 2 sparse ones (group 2),
/// 68 stimuli in total.
inline std::vector<SequencePlan> standard_composition() {
  return {{SequenceSpec::type1(), 1}, {SequenceSpec::type1(), 1},
          {SequenceSpec::type1(), 1}, {SequenceSpec::type1(), 1},
          {SequenceSpec::type2(), 2}, {SequenceSpec::type2(), 2}};
}

struct TrialStimulus {
  Stimulus stimulus;
  int group = 1;
  int sequence = 0;  // index into the composition that produced the trial
};

struct Trial {
  std::vector<TrialStimulus> stimuli;

  std::size_t size() const { return stimuli.size(); }
};

struct TrialReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

namespace detail {

/// Most appearances a symbol can still make in `positions` consecutive
/// stimuli without occupying two consecutive ones.
inline int alternating_capacity(int positions) {
  return positions <= 0 ? 0 : (positions + 1) / 2;
}

/// Per-stimulus counts of selectable highlights. They differ by at most
/// one and sum to appearances * selectable count.
inline std::vector<int> selectable_quotas(int length, int total_selectable) {
  const int base = total_selectable / length;
  const int rem = total_selectable % length;
  std::vector<int> quotas(static_cast<std::size_t>(length), base);
  for (int i = 0; i < rem; ++i) quotas[static_cast<std::size_t>(i)] += 1;
  return quotas;
}

}  // namespace detail

/// Generates one sequence: every selectable symbol appears exactly
/// `spec.appearances` times, no selectable symbol occurs in two
/// consecutive stimuli, every stimulus highlights kHighlightCount cells
/// (padded with distinct blanks), and neighbouring cells are avoided
/// within a stimulus where the constraints leave room. Throws ValueError
/// for specs that are impossible by counting, GenerationError when the
/// randomised search exhausts `max_restarts`.
inline std::vector<Stimulus> generate_sequence(const SymbolGrid& grid,
                                               const SequenceSpec& spec,
                                               std::mt19937_64& rng,
                                               int max_restarts = 10000) {
  const auto grid_errors = validate_grid(grid);
  if (!grid_errors.empty()) {
    throw ValueError("generate_sequence: invalid grid: " + grid_errors.front());
  }
  const std::vector<int> selectable = grid.selectable();
  const std::vector<int> blanks = grid.blanks();
  const int s_count = static_cast<int>(selectable.size());
  const int b_count = static_cast<int>(blanks.size());
  const int length = spec.length;
  const int appearances = spec.appearances;

  if (length < 1 || appearances < 1) {
    throw ValueError("generate_sequence: length and appearances must be >= 1");
  }
  if (appearances > detail::alternating_capacity(length)) {
    throw ValueError(
        "generate_sequence: appearances exceed the non-consecutive capacity "
        "of the sequence length");
  }
  const int total_selectable = s_count * appearances;
  if (total_selectable > length * kHighlightCount) {
    throw ValueError("generate_sequence: more symbol appearances than slots");
  }
  const auto quotas = detail::selectable_quotas(length, total_selectable);
  const int max_quota = quotas.front();
  const int min_quota = quotas.back();
  if (max_quota > kHighlightCount) {
    throw ValueError("generate_sequence: a stimulus cannot hold the quota");
  }
  if (kHighlightCount - min_quota > b_count) {
    throw ValueError("generate_sequence: not enough blanks to pad stimuli");
  }

  std::vector<int> quota_order = quotas;
  std::vector<int> remaining(static_cast<std::size_t>(s_count));
  std::vector<int> blank_pool = blanks;

  for (int attempt = 0; attempt < max_restarts; ++attempt) {
    std::shuffle(quota_order.begin(), quota_order.end(), rng);
    std::fill(remaining.begin(), remaining.end(), appearances);
    std::vector<char> in_prev(static_cast<std::size_t>(grid.cell_count()), 0);
    std::vector<Stimulus> sequence;
    sequence.reserve(static_cast<std::size_t>(length));
    bool failed = false;

    for (int i = 0; i < length && !failed; ++i) {
      const int cap_skip = detail::alternating_capacity(length - 1 - i);
      const int cap_place = 1 + detail::alternating_capacity(length - 2 - i);
      const int quota = quota_order[static_cast<std::size_t>(i)];

      std::vector<int> must, pool;
      for (int s = 0; s < s_count; ++s) {
        const int r = remaining[static_cast<std::size_t>(s)];
        if (r == 0) continue;
        if (in_prev[static_cast<std::size_t>(selectable[static_cast<std::size_t>(s)])]) {
          if (r > cap_skip) failed = true;  // unplaceable within what is left
          continue;
        }
        if (r > cap_place) {
          failed = true;
          continue;
        }
        (r > cap_skip ? must : pool).push_back(s);
      }
      if (failed || static_cast<int>(must.size()) > quota) {
        failed = true;
        break;
      }

      std::vector<int> chosen = must;
      std::vector<char> in_stim(static_cast<std::size_t>(grid.cell_count()), 0);
      for (const int s : chosen) {
        in_stim[static_cast<std::size_t>(selectable[static_cast<std::size_t>(s)])] = 1;
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      while (static_cast<int>(chosen.size()) < quota && !pool.empty()) {
        // Highest remaining count first; among those, prefer cells with the
        // fewest already highlighted neighbours to spread the pattern out.
        std::size_t best = 0;
        int best_r = -1, best_adj = 0;
        for (std::size_t c = 0; c < pool.size(); ++c) {
          const int id = selectable[static_cast<std::size_t>(pool[c])];
          const int r = remaining[static_cast<std::size_t>(pool[c])];
          int adj = 0;
          for (const int nb : grid.neighbours(id)) {
            adj += in_stim[static_cast<std::size_t>(nb)];
          }
          if (r > best_r || (r == best_r && adj < best_adj)) {
            best = c;
            best_r = r;
            best_adj = adj;
          }
        }
        const int s = pool[best];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        chosen.push_back(s);
        in_stim[static_cast<std::size_t>(selectable[static_cast<std::size_t>(s)])] = 1;
      }
      if (static_cast<int>(chosen.size()) < quota) {
        failed = true;
        break;
      }

      Stimulus stim;
      for (const int s : chosen) {
        stim.highlighted.push_back(selectable[static_cast<std::size_t>(s)]);
        remaining[static_cast<std::size_t>(s)] -= 1;
      }
      std::shuffle(blank_pool.begin(), blank_pool.end(), rng);
      for (int b = 0; b < kHighlightCount - quota; ++b) {
        stim.highlighted.push_back(blank_pool[static_cast<std::size_t>(b)]);
      }
      std::sort(stim.highlighted.begin(), stim.highlighted.end());

      std::fill(in_prev.begin(), in_prev.end(), 0);
      for (const int s : chosen) {
        in_prev[static_cast<std::size_t>(selectable[static_cast<std::size_t>(s)])] = 1;
      }
      sequence.push_back(std::move(stim));
    }

    if (!failed) return sequence;
  }
  std::ostringstream os;
  os << "generate_sequence: no valid sequence after " << max_restarts
     << " restarts (length " << length << ", appearances " << appearances
     << ")";
  throw GenerationError(os.str());
}

/// Random order that interleaves streams of the given lengths: the result
/// holds one stream index per slot, each appearing exactly `lengths[i]`
/// times, and consuming a stream in slot order preserves its inner order.
inline std::vector<int> interleave_order(const std::vector<std::size_t>& lengths,
                                         std::mt19937_64& rng) {
  std::vector<int> tags;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    tags.insert(tags.end(), lengths[i], static_cast<int>(i));
  }
  std::shuffle(tags.begin(), tags.end(), rng);
  return tags;
}

namespace detail {

/// Highlight membership of each selectable symbol over the whole trial,
/// packed into 64-bit words. Two symbols sharing a pattern cannot be told
/// apart by any decoder.
inline std::vector<std::vector<std::uint64_t>> membership_patterns(
    const SymbolGrid& grid, const Trial& trial) {
  const auto selectable = grid.selectable();
  const std::size_t words = (trial.size() + 63) / 64;
  std::vector<std::vector<std::uint64_t>> patterns(
      selectable.size(), std::vector<std::uint64_t>(words, 0));
  for (std::size_t t = 0; t < trial.size(); ++t) {
    for (std::size_t s = 0; s < selectable.size(); ++s) {
      if (trial.stimuli[t].stimulus.contains(selectable[s])) {
        patterns[s][t / 64] |= std::uint64_t{1} << (t % 64);
      }
    }
  }
  return patterns;
}

inline bool patterns_unique(std::vector<std::vector<std::uint64_t>> patterns) {
  std::sort(patterns.begin(), patterns.end());
  return std::adjacent_find(patterns.begin(), patterns.end()) ==
         patterns.end();
}

}  // namespace detail

/// Builds one trial: generates each planned sequence, then interleaves
/// them in random stable order. Regenerates (bounded) in the unlikely case
/// that two symbols end up with identical membership patterns.
inline Trial assemble_trial(const SymbolGrid& grid, std::mt19937_64& rng,
                            const std::vector<SequencePlan>& composition =
                                standard_composition(),
                            int max_restarts = 10000) {
  if (composition.empty()) {
    throw ValueError("assemble_trial: empty composition");
  }
  constexpr int kDecodabilityAttempts = 50;
  for (int attempt = 0; attempt < kDecodabilityAttempts; ++attempt) {
    std::vector<std::vector<Stimulus>> streams;
    std::vector<std::size_t> lengths;
    for (const auto& plan : composition) {
      streams.push_back(generate_sequence(grid, plan.spec, rng, max_restarts));
      lengths.push_back(streams.back().size());
    }
    const std::vector<int> order = interleave_order(lengths, rng);

    Trial trial;
    std::vector<std::size_t> cursor(streams.size(), 0);
    for (const int stream : order) {
      const auto s = static_cast<std::size_t>(stream);
      TrialStimulus ts;
      ts.stimulus = std::move(streams[s][cursor[s]++]);
      ts.group = composition[s].group;
      ts.sequence = stream;
      trial.stimuli.push_back(std::move(ts));
    }
    if (detail::patterns_unique(detail::membership_patterns(grid, trial))) {
      return trial;
    }
  }
  throw GenerationError(
      "assemble_trial: could not reach unique membership patterns");
}

/// Labels every stimulus of a trial for an attended symbol: +1 when the
/// symbol is highlighted, -1 otherwise.
inline std::vector<Label> label_stimuli(const Trial& trial, int attended,
                                        const SymbolGrid& grid) {
  if (attended < 0 || attended >= grid.cell_count() || grid.is_blank(attended)) {
    throw ValueError("label_stimuli: attended symbol must be selectable");
  }
  std::vector<Label> labels;
  labels.reserve(trial.size());
  for (const auto& ts : trial.stimuli) {
    labels.push_back(ts.stimulus.contains(attended) ? 1 : -1);
  }
  return labels;
}

/// Realised per-group class proportions of a trial for an attended symbol,
/// rows ordered by ascending group tag.
inline std::vector<std::array<double, 2>> realized_proportions(
    const Trial& trial, int attended, const SymbolGrid& grid) {
  const auto labels = label_stimuli(trial, attended, grid);
  std::vector<int> groups;
  for (const auto& ts : trial.stimuli) {
    if (std::find(groups.begin(), groups.end(), ts.group) == groups.end()) {
      groups.push_back(ts.group);
    }
  }
  std::sort(groups.begin(), groups.end());
  std::vector<std::array<double, 2>> rows;
  for (const int g : groups) {
    std::size_t total = 0, targets = 0;
    for (std::size_t i = 0; i < trial.size(); ++i) {
      if (trial.stimuli[i].group != g) continue;
      ++total;
      if (labels[i] == 1) ++targets;
    }
    const double share = static_cast<double>(targets) /
                         static_cast<double>(total);
    rows.push_back({share, 1.0 - share});
  }
  return rows;
}

/// Checks every structural invariant of a trial against its composition:
/// stimulus sizes, id validity, appearance counts per sequence, the
/// non-consecutive rule within each sequence, group tags and unique
/// membership patterns. Collects all violations.
inline TrialReport validate_trial(const SymbolGrid& grid, const Trial& trial,
                                  const std::vector<SequencePlan>& composition =
                                      standard_composition()) {
  TrialReport report;
  auto complain = [&](const std::string& msg) {
    report.violations.push_back(msg);
  };

  const auto grid_errors = validate_grid(grid);
  if (!grid_errors.empty()) {
    complain("invalid grid: " + grid_errors.front());
    return report;
  }

  std::size_t expected = 0;
  for (const auto& plan : composition) {
    expected += static_cast<std::size_t>(plan.spec.length);
  }
  if (trial.size() != expected) {
    complain("trial has " + std::to_string(trial.size()) + " stimuli, expected " +
             std::to_string(expected));
    return report;
  }

  bool ids_valid = true;
  for (std::size_t t = 0; t < trial.size(); ++t) {
    const auto& h = trial.stimuli[t].stimulus.highlighted;
    if (static_cast<int>(h.size()) != kHighlightCount) {
      complain("stimulus " + std::to_string(t) + " highlights " +
               std::to_string(h.size()) + " cells, expected " +
               std::to_string(kHighlightCount));
    }
    if (!std::is_sorted(h.begin(), h.end()) ||
        std::adjacent_find(h.begin(), h.end()) != h.end()) {
      complain("stimulus " + std::to_string(t) +
               " has unsorted or duplicate cells");
    }
    for (const int id : h) {
      if (id < 0 || id >= grid.cell_count()) {
        complain("stimulus " + std::to_string(t) + " references cell " +
                 std::to_string(id) + " outside the grid");
        ids_valid = false;
      }
    }
  }
  // The remaining checks index the grid by cell id.
  if (!ids_valid) return report;

  // Per-sequence structure.
  for (std::size_t s = 0; s < composition.size(); ++s) {
    std::vector<const Stimulus*> stream;
    for (const auto& ts : trial.stimuli) {
      if (ts.sequence == static_cast<int>(s)) {
        stream.push_back(&ts.stimulus);
        if (ts.group != composition[s].group) {
          complain("sequence " + std::to_string(s) + " carries group tag " +
                   std::to_string(ts.group) + ", expected " +
                   std::to_string(composition[s].group));
        }
      }
    }
    if (static_cast<int>(stream.size()) != composition[s].spec.length) {
      complain("sequence " + std::to_string(s) + " has " +
               std::to_string(stream.size()) + " stimuli, expected " +
               std::to_string(composition[s].spec.length));
      continue;
    }
    for (const int id : grid.selectable()) {
      int count = 0;
      for (const auto* stim : stream) count += stim->contains(id);
      if (count != composition[s].spec.appearances) {
        complain("sequence " + std::to_string(s) + ": symbol " +
                 std::to_string(id) + " appears " + std::to_string(count) +
                 " times, expected " +
                 std::to_string(composition[s].spec.appearances));
      }
    }
    for (std::size_t i = 0; i + 1 < stream.size(); ++i) {
      for (const int id : stream[i]->highlighted) {
        if (!grid.is_blank(id) && stream[i + 1]->contains(id)) {
          complain("sequence " + std::to_string(s) + ": symbol " +
                   std::to_string(id) + " highlighted in consecutive stimuli " +
                   std::to_string(i) + " and " + std::to_string(i + 1));
        }
      }
    }
  }

  if (!detail::patterns_unique(detail::membership_patterns(grid, trial))) {
    complain("two selectable symbols share one membership pattern");
  }
  return report;
}

}  // namespace llp
