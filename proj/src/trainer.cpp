#include "sinet/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "sinet/weights_io.hpp"

namespace sinet {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

// Smooth per-channel background plus a differently textured foreground blob.
void paint_sample(ToySample& out, long size, ToyDatasetConfig::Family family, Rng& rng) {
  out.image = TensorF::zeros({1, 3, size, size});
  out.mask = BinaryMask::zeros(size, size);

  double bg_phase[3], bg_freq[3], bg_base[3];
  for (int c = 0; c < 3; ++c) {
    bg_phase[c] = rng.uniform(0.0, 2.0 * M_PI);
    bg_freq[c] = rng.uniform(1.0, 3.0);
    bg_base[c] = rng.uniform(0.1, 0.4);
  }
  double fg_base[3];
  for (int c = 0; c < 3; ++c) fg_base[c] = rng.uniform(0.6, 0.9);

  const bool ellipse = family == ToyDatasetConfig::Family::Ellipses ||
                       (family == ToyDatasetConfig::Family::Mixed && rng.uniform() < 0.5);
  const double cx = rng.uniform(0.3, 0.7) * static_cast<double>(size);
  const double cy = rng.uniform(0.3, 0.7) * static_cast<double>(size);
  const double rx = rng.uniform(0.15, 0.3) * static_cast<double>(size);
  const double ry = rng.uniform(0.15, 0.3) * static_cast<double>(size);

  for (long y = 0; y < size; ++y) {
    for (long x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(size);
      const double v = static_cast<double>(y) / static_cast<double>(size);
      bool inside;
      if (ellipse) {
        const double dx = (static_cast<double>(x) - cx) / rx;
        const double dy = (static_cast<double>(y) - cy) / ry;
        inside = dx * dx + dy * dy <= 1.0;
      } else {
        inside = std::abs(static_cast<double>(x) - cx) <= rx &&
                 std::abs(static_cast<double>(y) - cy) <= ry;
      }
      if (inside) out.mask.set(y, x, 1);
      for (int c = 0; c < 3; ++c) {
        double val;
        if (inside) {
          val = fg_base[c] + 0.08 * std::sin(12.0 * u + 9.0 * v + bg_phase[c]);
        } else {
          val = bg_base[c] + 0.12 * std::sin(2.0 * M_PI * bg_freq[c] * u + bg_phase[c]) *
                                 std::cos(2.0 * M_PI * bg_freq[c] * v);
        }
        out.image.at_mut(0, c, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
}

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<std::vector<float>> buffers;
};

Snapshot take_snapshot(ParamList<float>& params, BufferList<float>& buffers) {
  Snapshot s;
  for (auto& p : params) s.params.push_back(p.tensor.data());
  for (auto& b : buffers) s.buffers.push_back(*b.data);
  return s;
}

void restore_snapshot(ParamList<float>& params, BufferList<float>& buffers,
                      const Snapshot& s) {
  for (size_t i = 0; i < params.size(); ++i) params[i].tensor.mut_data() = s.params[i];
  for (size_t i = 0; i < buffers.size(); ++i) *buffers[i].data = s.buffers[i];
}

TensorF make_batch(const std::vector<ToySample>& data, const std::vector<int>& order,
                   size_t begin, size_t end) {
  const Shape s0 = data[static_cast<size_t>(order[begin])].image.shape();
  TensorF batch = TensorF::zeros({static_cast<long>(end - begin), s0.c, s0.h, s0.w});
  float* dst = batch.mut_data().data();
  const long stride = s0.c * s0.h * s0.w;
  for (size_t k = begin; k < end; ++k) {
    const auto& img = data[static_cast<size_t>(order[k])].image.data();
    std::copy(img.begin(), img.end(), dst + static_cast<long>(k - begin) * stride);
  }
  return batch;
}

double dataset_miou(Model& model, const std::vector<ToySample>& data, bool aux_head) {
  NoGradGuard ng;
  ConfusionMatrix cm(model.num_class());
  for (const auto& sample : data) {
    TensorF logits;
    if (aux_head) {
      TensorF low = model.encoder_forward(sample.image, false);
      logits = bilinear_upsample(low, sample.image.shape().h, sample.image.shape().w);
    } else {
      logits = model.forward(sample.image, false);
    }
    cm.add(argmax_labels(logits)[0], mask_to_labels(sample.mask));
  }
  return cm.miou();
}

}  // namespace

std::vector<ToySample> make_toy_dataset(const ToyDatasetConfig& cfg) {
  if (cfg.count < 1 || cfg.image_size < 8) {
    throw ConfigError("toy dataset: count must be >= 1 and image_size >= 8");
  }
  Rng rng(cfg.seed);
  std::vector<ToySample> out(static_cast<size_t>(cfg.count));
  for (auto& sample : out) paint_sample(sample, cfg.image_size, cfg.family, rng);
  return out;
}

TrainReport train_two_stage(Model& model, const std::vector<ToySample>& data,
                            const TwoStageSchedule& schedule, const OptimConfig& optim,
                            const TrainOptions& options) {
  schedule.validate();
  optim.validate();
  options.loss.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");

  const long H = data.front().image.shape().h;
  const long W = data.front().image.shape().w;
  std::vector<BinaryMask> bands;
  bands.reserve(data.size());
  for (const auto& s : data) {
    bands.push_back(boundary_band(s.mask, options.loss.structuring_size));
  }

  Rng shuffle_rng(optim.seed);
  TrainReport report;

  auto run_stage = [&](int stage, int epochs, int batch_size, double& best_miou) {
    ParamList<float> trainable = model.named_params(stage == 1);
    ParamList<float> all_params = model.named_params(false);
    BufferList<float> all_buffers = model.named_buffers(false);
    AdamState adam;
    Snapshot best = take_snapshot(all_params, all_buffers);
    best_miou = -1.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::vector<int> order(data.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      }
      double epoch_loss = 0.0;
      long batches = 0;
      for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
        TensorF batch = make_batch(data, order, begin, end);
        std::vector<BinaryMask> batch_masks, batch_bands;
        for (size_t k = begin; k < end; ++k) {
          batch_masks.push_back(data[static_cast<size_t>(order[k])].mask);
          batch_bands.push_back(bands[static_cast<size_t>(order[k])]);
        }
        for (auto& p : trainable) p.tensor.zero_grad();
        TensorF logits;
        if (stage == 1) {
          logits = bilinear_upsample(model.encoder_forward(batch, true), H, W);
        } else {
          logits = model.forward(batch, true);
        }
        TensorF loss = boundary_weighted_ce(logits, batch_masks, options.loss, &batch_bands);
        const double lv = static_cast<double>(loss.data()[0]);
        if (!std::isfinite(lv)) {
          throw TrainError("train: loss diverged at stage " + std::to_string(stage) +
                           " epoch " + std::to_string(epoch));
        }
        loss.backward();
        adam_step(trainable, adam, optim);
        epoch_loss += lv;
        ++batches;
      }
      const double miou_now = dataset_miou(model, data, stage == 1);
      report.records.push_back({stage, epoch, epoch_loss / static_cast<double>(batches),
                                miou_now});
      if (miou_now > best_miou) {
        best_miou = miou_now;
        best = take_snapshot(all_params, all_buffers);
      }
    }
    if (epochs > 0) restore_snapshot(all_params, all_buffers, best);
  };

  run_stage(1, schedule.stage1_epochs, schedule.batch1, report.best_stage1_miou);
  run_stage(2, schedule.stage2_epochs, schedule.batch2, report.best_stage2_miou);

  if (!options.checkpoint_path.empty() &&
      (schedule.stage1_epochs > 0 || schedule.stage2_epochs > 0)) {
    save_weights(model, options.checkpoint_path);
  }
  return report;
}

std::pair<TensorF, BinaryMask> rotate_augment(const TensorF& image, const BinaryMask& mask,
                                              double degrees) {
  const Shape& s = image.shape();
  if (s.h != mask.h || s.w != mask.w) {
    throw DimensionError("rotate: image and mask sizes disagree");
  }
  const double theta = degrees * kDegToRad;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cy = static_cast<double>(s.h - 1) / 2.0;
  const double cx = static_cast<double>(s.w - 1) / 2.0;

  TensorF out_img = TensorF::zeros(s);
  BinaryMask out_mask = BinaryMask::zeros(mask.h, mask.w);
  for (long y = 0; y < s.h; ++y) {
    for (long x = 0; x < s.w; ++x) {
      // Inverse map: source position that lands on (y, x).
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = ct * dy + st * dx + cy;
      const double sx = -st * dy + ct * dx + cx;

      const long ny = std::lround(sy);
      const long nx = std::lround(sx);
      if (ny >= 0 && ny < mask.h && nx >= 0 && nx < mask.w) {
        out_mask.set(y, x, mask.at(ny, nx));
      }

      const long y0 = static_cast<long>(std::floor(sy));
      const long x0 = static_cast<long>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      for (long n = 0; n < s.n; ++n) {
        for (long c = 0; c < s.c; ++c) {
          auto sample = [&](long yy, long xx) -> double {
            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) return 0.0;
            return static_cast<double>(image.at(n, c, yy, xx));
          };
          const double top = sample(y0, x0) + fx * (sample(y0, x0 + 1) - sample(y0, x0));
          const double bot =
              sample(y0 + 1, x0) + fx * (sample(y0 + 1, x0 + 1) - sample(y0 + 1, x0));
          out_img.at_mut(n, c, y, x) = static_cast<float>(top + fy * (bot - top));
        }
      }
    }
  }
  return {out_img, out_mask};
}

double eval_rotation(Model& model, const std::vector<ToySample>& data, double max_degrees,
                     uint64_t seed) {
  NoGradGuard ng;
  Rng rng(seed);
  ConfusionMatrix cm(model.num_class());
  for (const auto& sample : data) {
    const double angle = rng.uniform(-max_degrees, max_degrees);
    auto [img, mask] = rotate_augment(sample.image, sample.mask, angle);
    TensorF logits = model.forward(img, false);
    cm.add(argmax_labels(logits)[0], mask_to_labels(mask));
  }
  return cm.miou();
}

AblationResult ablate_decoders(const ArchTable& table, int num_class,
                               const std::vector<ToySample>& data,
                               const std::vector<DecoderKind>& kinds,
                               const std::vector<double>& angles,
                               const TwoStageSchedule& schedule, const OptimConfig& optim,
                               const LossConfig& loss, uint64_t model_seed) {
  AblationResult result;
  for (DecoderKind kind : kinds) {
    Model model = build_sinet(table, num_class, kind, model_seed);
    TrainOptions opts;
    opts.loss = loss;
    train_two_stage(model, data, schedule, optim, opts);
    for (double angle : angles) {
      const double score = eval_rotation(model, data, angle, optim.seed + 1);
      result.cells.push_back({kind, angle, score});
    }
  }
  return result;
}

}  // namespace sinet
