#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "sinet/loss.hpp"
#include "sinet/metrics.hpp"
#include "sinet/model.hpp"

namespace sinet {

struct OptimConfig {
  double lr = 7.5e-3;
  double weight_decay = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("optim: lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("optim: betas must lie in [0, 1)");
    }
  }
};

struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  long step = 0;
  std::unordered_map<std::string, Slot> slots;
};

// Bias-corrected ADAM with weight decay folded into the gradient. Parameters
// that have no gradient buffer yet are skipped; a non-finite gradient aborts
// with the parameter name. Moments are kept in 64-bit regardless of T.
template <class T>
void adam_step(ParamList<T>& params, AdamState& state, const OptimConfig& cfg) {
  cfg.validate();
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    auto& value = p.tensor.mut_data();
    auto& grad = p.tensor.mut_grad();
    auto& slot = state.slots[p.name];
    if (slot.m.size() != value.size()) {
      slot.m.assign(value.size(), 0.0);
      slot.v.assign(value.size(), 0.0);
    }
    for (size_t i = 0; i < value.size(); ++i) {
      double g = static_cast<double>(grad[i]);
      if (!std::isfinite(g)) {
        throw TrainError("adam: non-finite gradient in parameter '" + p.name + "'");
      }
      g += cfg.weight_decay * static_cast<double>(value[i]);
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      value[i] = static_cast<T>(static_cast<double>(value[i]) -
                                cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

struct TwoStageSchedule {
  int stage1_epochs = 0;
  int stage2_epochs = 0;
  int batch1 = 4;
  int batch2 = 4;

  void validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0 || batch1 < 1 || batch2 < 1) {
      throw ConfigError("schedule: epochs must be >= 0 and batch sizes >= 1");
    }
  }
};

struct ToyDatasetConfig {
  int count = 8;
  long image_size = 64;
  enum class Family { Ellipses, Rectangles, Mixed } family = Family::Mixed;
  uint64_t seed = 7;
};

struct ToySample {
  TensorF image;  // (1, 3, h, w) in [0, 1]
  BinaryMask mask;
};

// Textured backgrounds with one elliptical or rectangular foreground blob per
// image; deterministic for a fixed seed.
std::vector<ToySample> make_toy_dataset(const ToyDatasetConfig& cfg);

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  double loss = 0.0;
  double miou = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> records;
  double best_stage1_miou = 0.0;
  double best_stage2_miou = 0.0;
};

struct TrainOptions {
  LossConfig loss;
  std::string checkpoint_path;  // empty = do not persist
};

// Stage 1 trains encoder weights only against an auxiliary head (final-row
// logits bilinearly upsampled to the input size); stage 2 restores the best
// stage-1 encoder and trains everything through the decoder. The best
// checkpoint by training mIoU is restored into the model (and saved when a
// path is configured).
TrainReport train_two_stage(Model& model, const std::vector<ToySample>& data,
                            const TwoStageSchedule& schedule, const OptimConfig& optim,
                            const TrainOptions& options = {});

// Rotation about the image centre; bilinear for the image, nearest for the
// mask, zero fill outside.
std::pair<TensorF, BinaryMask> rotate_augment(const TensorF& image, const BinaryMask& mask,
                                              double degrees);

// mIoU over the dataset with one uniform angle in [-max_degrees, max_degrees]
// sampled per image from `seed`.
double eval_rotation(Model& model, const std::vector<ToySample>& data, double max_degrees,
                     uint64_t seed);

struct AblationCell {
  DecoderKind kind;
  double angle = 0.0;
  double miou = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;

  double at(DecoderKind kind, double angle) const {
    for (const auto& c : cells) {
      if (c.kind == kind && c.angle == angle) return c.miou;
    }
    throw ConfigError("ablation: no cell for " + decoder_kind_name(kind));
  }
};

// Trains one model per decoder kind with an identical seed/schedule and
// evaluates each under the listed rotation limits.
AblationResult ablate_decoders(const ArchTable& table, int num_class,
                               const std::vector<ToySample>& data,
                               const std::vector<DecoderKind>& kinds,
                               const std::vector<double>& angles,
                               const TwoStageSchedule& schedule, const OptimConfig& optim,
                               const LossConfig& loss, uint64_t model_seed = 42);

}  // namespace sinet
