#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ctxprobe/models/masked_lm.hpp"
#include "ctxprobe/seqcore/random.hpp"
#include "ctxprobe/seqcore/sequence.hpp"

namespace ctxprobe {

struct TrainConfig {
  double mask_rate = 0.15;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  // Linear warmup over warmup_steps, then cosine decay to
  // learning_rate * final_lr_fraction at the last step.
  std::size_t warmup_steps = 100;
  double final_lr_fraction = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  // Replace masked inputs 80% mask / 10% random / 10% unchanged.
  bool mixed_corruption = false;
  // Parameters are snapshotted every this many steps; a non-finite loss
  // restores the last snapshot and stops training.
  std::size_t snapshot_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

class Adam {
 public:
  Adam(std::size_t size, double beta1, double beta2, double epsilon);
  void step(std::span<double> params, std::span<const double> gradient, double learning_rate);
  [[nodiscard]] std::size_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

double scheduled_learning_rate(const TrainConfig& cfg, std::size_t step);

struct TrainResult {
  std::vector<double> loss_trace;  // per step mean masked cross-entropy
  bool diverged = false;
  std::size_t restored_step = 0;  // step of the restored snapshot when diverged
};

// One training example: masked input tokens and their targets.
struct MaskedExample {
  std::vector<int> tokens;
  TargetSet targets;
};

// Masks each position with probability mask_rate (at least one position).
MaskedExample make_masked_example(const Sequence& x, std::size_t mask_token, const TrainConfig& cfg, Rng& rng);

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Masked-LM training with Adam; each step draws batch_size sequences from the
// corpus in a seeded shuffled order.
TrainResult train_masked_lm(MaskedLm& model, std::span<const Sequence> corpus, const TrainConfig& cfg,
                            const StepCallback& on_step = {});

void write_loss_trace(const std::filesystem::path& path, std::span<const double> trace);
// Trailing mean over `window` steps (shorter at the start).
std::vector<double> smooth_trace(std::span<const double> trace, std::size_t window);

inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const MaskedLm& model, const std::filesystem::path& path);
std::unique_ptr<MaskedLm> load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<MaskedLm> make_model(const nlohmann::json& kind_and_config);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  double gradient_norm = 0.0;
};

// Central differences on `samples` randomly chosen parameters. Relative
// error is |a - n| / max(|a|, |n|, denominator_floor).
GradCheckResult grad_check(MaskedLm& model, std::span<const int> tokens, const TargetSet& targets,
                           std::size_t samples = 200, double step = 1e-5, std::uint64_t seed = 0,
                           double denominator_floor = 1e-6);

}  // namespace ctxprobe
