#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/dram.hpp"
#include "fym/flowmatch/loss.hpp"
#include "fym/synth.hpp"
#include "fym/tensor/adam.hpp"

namespace fym::flowmatch {

enum class Phase { train, finetune };

inline std::string to_string(Phase p) { return p == Phase::train ? "train" : "finetune"; }

struct TrainConfig {
  int steps = 4000;
  int batch = 4;
  std::size_t pixels_per_sample = 0;  // random pixel subset per batch element; 0 = whole frame
  double learning_rate = 1e-4;
  double final_lr_fraction = 1.0;  // cosine decay to learning_rate * this over `steps`; 1 = constant
  double t_min = 1e-3;
  std::uint64_t seed = 0;
  Phase phase = Phase::train;
  bool dram = false;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
    if (batch < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
      throw std::invalid_argument("train: final lr fraction must lie in (0, 1]");
    }
    if (!(t_min > 0.0 && t_min < 0.5)) throw std::invalid_argument("train: t_min must lie in (0, 0.5)");
  }
};

/// Maps a predicted clean frame to landmarks (default: analytic shape extraction).
using LandmarkDetector = std::function<dram::LandmarkSet(const Image& predicted, int frame)>;

/// Stochastic CFM training on one clip with optional dynamic re-weighting. Every source of
/// randomness derives from the config seed.
class Trainer {
 public:
  Trainer(VelocityModel& model, const synth::VideoBundle& video, TrainConfig config,
          std::optional<std::vector<dram::LandmarkSet>> reference = std::nullopt)
      : model_(model),
        video_(video),
        config_(config),
        schedule_(config.t_min),
        optimizer_(model.params(), tensor::AdamOptions{config.learning_rate}),
        rng_(config.seed),
        reference_(reference ? std::move(*reference) : video.landmarks) {
    config_.validate();
    video_.validate();
    const ModelConfig& c = model_.config();
    if (!video_.frames.front().same_dims(c.height, c.width)) {
      throw std::invalid_argument("train: clip is " + std::to_string(video_.height()) + "x" +
                                  std::to_string(video_.width()) + ", model expects " + std::to_string(c.height) + "x" +
                                  std::to_string(c.width));
    }
    if (config_.pixels_per_sample > c.pixels()) {
      throw std::invalid_argument("train: pixels per sample exceeds the frame size");
    }
    if (reference_.size() != video_.frame_count()) {
      throw std::invalid_argument("train: reference landmarks do not cover every frame");
    }
    for (std::size_t i = 0; i < video_.frame_count(); ++i) {
      weights_.push_back(dram::init_weights(c.height, c.width));
      token_weights_.push_back(unit_weights(c));
    }
    detector_ = [](const Image& img, int) { return synth::extract_landmarks(clamp01(img)); };
  }

  void set_detector(LandmarkDetector detector) { detector_ = std::move(detector); }
  void set_warning_sink(std::function<void(const std::string&)> sink) { warn_ = std::move(sink); }

  const dram::WeightMatrix& frame_weights(int frame) const { return weights_.at(frame - 1); }
  const std::vector<double>& frame_token_weights(int frame) const { return token_weights_.at(frame - 1); }
  const std::vector<double>& losses() const noexcept { return losses_; }

  /// Re-weights frame `frame` from a predicted landmark set (nullopt = missing landmarks).
  void apply_dram(int frame, const std::optional<dram::LandmarkSet>& predicted) {
    const ModelConfig& c = model_.config();
    const std::optional<dram::LandmarkSet> ref =
        reference_.at(frame - 1).empty() ? std::nullopt : std::optional(reference_[frame - 1]);
    auto r = dram::dram_step(weights_.at(frame - 1), predicted, ref, c.grid_h, c.grid_w, warn_);
    weights_[frame - 1] = std::move(r.weights);
    token_weights_[frame - 1] = std::move(r.token_weights);
  }

  /// One optimizer step on a fresh batch; returns the batch loss.
  double step() {
    const ModelConfig& c = model_.config();
    const int frames = static_cast<int>(video_.frame_count());
    std::uniform_int_distribution<int> pick_frame(1, frames);
    std::uniform_real_distribution<double> pick_t(schedule_.t_min(), schedule_.t_max());
    std::normal_distribution<double> normal(0.0, 1.0);

    struct Element {
      int frame;
      double t;
      std::vector<double> eps;
      std::vector<std::size_t> subset;
      CfmTerms terms;
    };
    std::vector<Element> batch;
    Tape tape(true);
    Var total = tape.constant(Array::scalar(0.0));
    for (int b = 0; b < config_.batch; ++b) {
      const int frame = pick_frame(rng_);
      const double t = pick_t(rng_);
      std::vector<double> eps(c.pixels());
      for (auto& e : eps) e = normal(rng_);
      std::vector<std::size_t> subset;
      if (config_.pixels_per_sample > 0 && config_.pixels_per_sample < c.pixels()) {
        subset.resize(c.pixels());
        std::iota(subset.begin(), subset.end(), std::size_t{0});
        std::shuffle(subset.begin(), subset.end(), rng_);
        subset.resize(config_.pixels_per_sample);
        std::sort(subset.begin(), subset.end());
      }
      Var tokens = frame_tokens(tape, model_, video_.masks[frame - 1], frame, frames, token_weights_[frame - 1]);
      CfmTerms terms = cfm_loss(tape, model_, schedule_, video_.frames[frame - 1].pixels, tokens,
                                video_.frames.front().pixels, t, eps, subset);
      total = tensor::add(total, terms.loss);
      batch.push_back({frame, t, std::move(eps), std::move(subset), std::move(terms)});
    }
    if (config_.final_lr_fraction < 1.0 && config_.steps > 1) {
      const double progress = std::min(1.0, static_cast<double>(losses_.size()) / (config_.steps - 1));
      const double f = config_.final_lr_fraction;
      optimizer_.set_learning_rate(config_.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
    }
    Var loss = tensor::scale(total, 1.0 / config_.batch);
    const double value = loss.value().item();
    tensor::GradMap grads = tape.backward(loss, model_.params());
    optimizer_.step(model_.params(), grads);
    losses_.push_back(value);

    if (config_.dram) {
      for (const Element& e : batch) {
        Image predicted(c.height, c.width);
        if (e.subset.empty()) {
          predicted.pixels = predict_clean(schedule_, e.terms.noisy, e.terms.eps_pred, e.t);
        } else {
          // The loss only saw a subset; landmarks need the whole frame.
          Tape full(false);
          Var tokens = full.constant(Array(tape_free_tokens(e.frame)));
          CfmTerms all = cfm_loss(full, model_, schedule_, video_.frames[e.frame - 1].pixels, tokens,
                                  video_.frames.front().pixels, e.t, e.eps);
          predicted.pixels = predict_clean(schedule_, all.noisy, all.eps_pred, e.t);
        }
        apply_dram(e.frame, detector_(predicted, e.frame));
      }
    }
    return value;
  }

  /// Runs config.steps steps; `progress` sees (step index, loss) after each.
  const std::vector<double>& run(const std::function<void(int, double)>& progress = {}) {
    if (config_.phase == Phase::finetune && !model_.restored()) {
      throw std::invalid_argument("train: fine-tuning requires a model restored from a checkpoint");
    }
    for (int s = 0; s < config_.steps; ++s) {
      const double l = step();
      if (progress) progress(s, l);
    }
    return losses_;
  }

 private:
  Array tape_free_tokens(int frame) const {
    Tape tape(false);
    return frame_tokens(tape, model_, video_.masks[frame - 1], frame, static_cast<int>(video_.frame_count()),
                        token_weights_[frame - 1])
        .value();
  }

  VelocityModel& model_;
  const synth::VideoBundle& video_;
  TrainConfig config_;
  CfmSchedule schedule_;
  tensor::Adam optimizer_;
  std::mt19937_64 rng_;
  std::vector<dram::LandmarkSet> reference_;
  std::vector<dram::WeightMatrix> weights_;
  std::vector<std::vector<double>> token_weights_;
  std::vector<double> losses_;
  LandmarkDetector detector_;
  std::function<void(const std::string&)> warn_;
};

/// Mean of a trailing/leading window of the loss curve.
inline double window_mean(const std::vector<double>& losses, std::size_t begin, std::size_t count) {
  if (begin >= losses.size()) return 0.0;
  const std::size_t end = std::min(losses.size(), begin + count);
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += losses[i];
  return s / static_cast<double>(end - begin);
}

inline double smoothed_start(const std::vector<double>& losses, std::size_t window = 100) {
  return window_mean(losses, 0, window);
}

inline double smoothed_end(const std::vector<double>& losses, std::size_t window = 100) {
  return losses.size() <= window ? window_mean(losses, 0, losses.size()) : window_mean(losses, losses.size() - window, window);
}

}  // namespace fym::flowmatch
