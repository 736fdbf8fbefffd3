#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/models/params.hpp"
#include "ctxprobe/probes/report.hpp"
#include "ctxprobe/scoring/scorer.hpp"

namespace ctxprobe {

enum class GroupKind { baseline, multiplicity, control, one_hot };

struct GroupSpec {
  GroupKind kind = GroupKind::baseline;
  std::size_t n = 1;
  // "1x", "multiplicity-3x", "control-3x", "one-hot"
  [[nodiscard]] std::string name() const;
  bool operator==(const GroupSpec&) const = default;
};

// 1x, multiplicity-2x..nx, control-2x..nx, one-hot.
std::vector<GroupSpec> standard_groups(std::size_t max_multiplicity = 5);

struct GroupSequences {
  GroupSpec spec;
  std::vector<Sequence> sequences;  // aligned with the corpus
};

// multiplicity-nx holds multiply(x, n); control-nx holds x followed by a
// random tail of (n - 1)|x| symbols. The 1x and one-hot groups hold x.
// Every sequence must be shorter than max_length.
std::vector<GroupSequences> build_groups(const std::vector<Sequence>& corpus, std::uint64_t seed,
                                         std::size_t max_multiplicity = 5, std::size_t max_length = 200);

struct RegressionSet {
  GroupSpec spec;
  Matrix inputs;   // examples x input width
  Matrix targets;  // examples x alphabet size
  std::vector<std::size_t> sequence_index;
  std::vector<std::size_t> positions;
};

struct ExtractOptions {
  std::size_t batch_size = 64;
  std::size_t workers = 1;
};

// Inputs are embeddings of the first unit (positions 0..|x|-1) of each
// group sequence, or indicator vectors of x_i for the one-hot group. Targets
// are rows of the one-at-a-time profile of x.
std::vector<RegressionSet> extract_training_sets(const Scorer& scorer, const std::vector<Sequence>& corpus,
                                                 const std::vector<GroupSequences>& groups,
                                                 const ExtractOptions& opt = {});

struct MlpSpec {
  std::vector<std::size_t> hidden{256, 256};
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  // Epochs without a validation improvement of at least min_improvement
  // before stopping.
  std::size_t patience = 8;
  double min_improvement = 1e-4;
  // Scale inputs with training-split mean and standard deviation.
  bool standardize = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

// Fully connected GELU network with a softmax output trained on soft
// cross-entropy.
class Mlp {
 public:
  Mlp(std::size_t input_width, std::size_t output_width, const std::vector<std::size_t>& hidden, std::uint64_t seed);

  [[nodiscard]] Matrix predict(const Matrix& inputs) const;
  // Mean soft cross-entropy over rows.
  [[nodiscard]] double loss(const Matrix& inputs, const Matrix& targets) const;
  // Returns the loss and writes its gradient into `gradient` (params layout).
  double loss_and_gradient(const Matrix& inputs, const Matrix& targets, std::span<double> gradient) const;

  [[nodiscard]] ParamSet& params() noexcept { return params_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }

 private:
  Matrix run(const Matrix& inputs, std::vector<Matrix>* pre, std::vector<Matrix>* post) const;

  ParamSet params_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

struct EvaluationConfig {
  std::size_t splits = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct GroupSummary {
  GroupSpec spec;
  double mean_validation_loss = 0.0;     // best validation loss averaged over splits
  double mean_target_entropy = 0.0;      // validation target entropy averaged over splits
  std::size_t failed_splits = 0;
  std::size_t retried_splits = 0;
};

struct RegressionResult {
  std::vector<GroupSummary> groups;
  // Rows (group, split, step) with train_loss and val_loss per epoch.
  ProbeReport curves;
  // Rows (group) with mean losses and entropies.
  ProbeReport summary;
};

// Validation examples are whole sequences: split s holds out a seeded
// random fifth of the sequence indices, shared by every group.
RegressionResult train_and_evaluate(const std::vector<RegressionSet>& sets, const MlpSpec& spec,
                                    const EvaluationConfig& cfg);

}  // namespace ctxprobe
