#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxprobe/probes/report.hpp"
#include "ctxprobe/scoring/metrics.hpp"
#include "ctxprobe/scoring/scorer.hpp"
#include "ctxprobe/seqcore/mutate.hpp"

namespace ctxprobe {

// Settings shared by every probe run.
struct ProbeContext {
  std::uint64_t seed = 0;
  // Threads fanning out over work items; forced to 1 for scorers that do
  // not declare concurrent use.
  std::size_t workers = 1;
  // Masked variants per scorer batch for one-at-a-time profiles.
  std::size_t batch_size = 64;
};

enum class ProfileMode { one_at_a_time, ofs };
std::string mode_name(ProfileMode m);
ProfileMode mode_from_name(const std::string& s);

// `count` positions spread evenly over the sequence, skipping position 0
// when exclude_first is set.
std::vector<std::size_t> spaced_positions(std::size_t length, std::size_t count, bool exclude_first);

struct DoublingConfig {
  std::size_t multiplicity = 2;
  ProfileMode mode = ProfileMode::one_at_a_time;
  // Leave position 0 out of both scores (start-codon bias in natural proteins).
  bool exclude_first = true;
  [[nodiscard]] nlohmann::json to_json() const;
};
ProbeReport run_doubling(const Scorer& scorer, const std::vector<Sequence>& corpus, const DoublingConfig& cfg,
                         const ProbeContext& ctx = {});

struct MultiplicitySweepConfig {
  std::vector<std::size_t> unit_sizes{20, 70, 100};
  std::vector<std::size_t> multiplicities{1, 2, 4};
  std::size_t samples = 20;
  ProfileMode mode = ProfileMode::one_at_a_time;
  // Short units at high multiplicity: {5..9} x {1, 2, 4, 8, 16, 32}.
  static MultiplicitySweepConfig short_units();
  [[nodiscard]] nlohmann::json to_json() const;
};
// Unit k of size u is random_member(u, u, alphabet, seed, k), so the
// (u, 2x) cell reproduces run_doubling on random_corpus(n, u, u, seed).
ProbeReport run_multiplicity_sweep(const Scorer& scorer, const AlphabetPtr& alphabet,
                                   const MultiplicitySweepConfig& cfg, const ProbeContext& ctx = {});

struct EntropyQuartet {
  std::string id;
  std::size_t position = 0;
  std::size_t other_mask = 0;  // non-equivalent masked position in copy 2
  double single = 0.0;
  double doubled = 0.0;
  double equivalent_masked = 0.0;
  double other_masked = 0.0;
};

struct EquivalentMaskConfig {
  std::size_t positions_per_sequence = 8;
  bool exclude_first = false;
  // Sequences whose single-copy OFS pppl is at or below this are skipped;
  // 0 disables the filter.
  double min_pppl = 5.0;
  [[nodiscard]] nlohmann::json to_json() const;
};
struct EquivalentMaskResult {
  std::vector<EntropyQuartet> quartets;
  ProbeReport report;
};
EquivalentMaskResult run_equivalent_mask(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                         const EquivalentMaskConfig& cfg, const ProbeContext& ctx = {});

struct FlipMatrix {
  std::size_t width = 0;
  // Row a: mean predicted distribution when the equivalent position holds a.
  std::vector<double> values;
  std::vector<std::size_t> counts;
  bool valid = true;
  [[nodiscard]] double at(std::size_t substituted, std::size_t predicted) const {
    return values[substituted * width + predicted];
  }
};
struct FlipMatrixConfig {
  std::size_t positions_per_sequence = 8;
  bool exclude_first = false;
  [[nodiscard]] nlohmann::json to_json() const;
};
struct FlipMatrixResult {
  FlipMatrix matrix;
  ProbeReport report;
};
// Every (sequence, position) sample is swept over the whole alphabet.
FlipMatrixResult run_flip_matrix(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                 const FlipMatrixConfig& cfg, const ProbeContext& ctx = {});

struct PreferencePoint {
  std::size_t position = 0;
  std::size_t right = 0;
  std::size_t left = 0;
  std::size_t ties = 0;
  // right / (right + left); absent when every call was a tie.
  std::optional<double> fraction_right;
};
struct ContralateralConfig {
  std::size_t length = 30;
  std::size_t samples = 100;
  // Probability differences below this are ties.
  double tie_tolerance = 1e-6;
  [[nodiscard]] nlohmann::json to_json() const;
};
struct ContralateralResult {
  std::vector<PreferencePoint> curve;
  ProbeReport report;
};
ContralateralResult run_contralateral(const Scorer& scorer, const AlphabetPtr& alphabet,
                                      const ContralateralConfig& cfg, const ProbeContext& ctx = {});

struct ImperfectRepeatConfig {
  std::vector<double> proportions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::array<double, 3> op_weights{1.0, 1.0, 1.0};
  double min_pppl = 5.0;
  [[nodiscard]] nlohmann::json to_json() const;
};
ProbeReport run_imperfect_repeat(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                 const ImperfectRepeatConfig& cfg, const ProbeContext& ctx = {});

struct NeedleConfig {
  std::vector<std::size_t> needle_sizes{10, 20, 50};
  std::vector<std::size_t> haystack_sizes{0, 100, 200, 480, 1000};
  std::size_t samples = 5;
  [[nodiscard]] nlohmann::json to_json() const;
};
ProbeReport run_needle_haystack(const Scorer& scorer, const AlphabetPtr& alphabet, const NeedleConfig& cfg,
                                const ProbeContext& ctx = {});

struct SkipConfig {
  std::size_t length = 40;
  std::size_t samples = 10;
  [[nodiscard]] nlohmann::json to_json() const;
};
// Rows hold per-position means over samples for the skip trace and for the
// control trace (two unrelated random sequences).
ProbeReport run_skip(const Scorer& scorer, const AlphabetPtr& alphabet, const SkipConfig& cfg,
                     const ProbeContext& ctx = {});

enum class ContextTransform { none, random, repeat, complement, reversed, reverse_complement };
std::string transform_name(ContextTransform t);
ContextTransform transform_from_name(const std::string& s);

struct ContextTransformConfig {
  std::size_t length = 40;
  std::size_t samples = 20;
  std::vector<ContextTransform> transforms{ContextTransform::none,       ContextTransform::random,
                                           ContextTransform::repeat,     ContextTransform::complement,
                                           ContextTransform::reversed,   ContextTransform::reverse_complement};
  ProfileMode mode = ProfileMode::one_at_a_time;
  [[nodiscard]] nlohmann::json to_json() const;
};
ProbeReport run_context_transform(const Scorer& scorer, const AlphabetPtr& alphabet,
                                  const ContextTransformConfig& cfg, const ProbeContext& ctx = {});

// Probe names accepted by the command line.
const std::vector<std::string>& probe_names();

}  // namespace ctxprobe
