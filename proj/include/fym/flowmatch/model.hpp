#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/hashgrid.hpp"
#include "fym/image.hpp"
#include "fym/tensor/ops.hpp"
#include "fym/trajectory.hpp"

namespace fym::flowmatch {

using tensor::Array;
using tensor::ParamStore;
using tensor::Tape;
using tensor::Var;

struct ModelConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  int hidden = 128;
  int attention_dim = 32;
  int position_frequencies = 5;
  int time_frequencies = 4;
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;
  double table_init = 0.1;
  hashgrid::HashGridConfig hash;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t time_width() const noexcept { return 1 + 2 * static_cast<std::size_t>(time_frequencies); }

  void validate() const {
    if (height == 0 || width == 0) throw std::invalid_argument("model: frame dimensions must be positive");
    if (hidden < 1 || attention_dim < 1) throw std::invalid_argument("model: widths must be positive");
    if (position_frequencies < 0 || position_frequencies > 16 || time_frequencies < 0 || time_frequencies > 16) {
      throw std::invalid_argument("model: frequency counts must lie in 0..16");
    }
    if (!(table_init >= 0.0)) throw std::invalid_argument("model: table init scale must be >= 0");
    trajectory::check_grid(height, width, grid_h, grid_w);
    hash.validate();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// [t, sin(2^k pi t), cos(2^k pi t) ...].
inline std::vector<double> time_embedding(double t, int frequencies) {
  std::vector<double> out{t};
  for (int k = 0; k < frequencies; ++k) {
    const double f = std::numbers::pi * static_cast<double>(1 << k);
    out.push_back(std::sin(f * t));
    out.push_back(std::cos(f * t));
  }
  return out;
}

/// Per-pixel velocity network. Each pixel embeds its noisy value, its first-frame value, its
/// position and the time; one cross-attention block reads the trajectory tokens; a two-layer
/// SiLU MLP produces the velocity. The hash table is registered in the same parameter store.
class VelocityModel {
 public:
  VelocityModel() = default;

  explicit VelocityModel(ModelConfig config, std::uint64_t seed = 0) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t h = static_cast<std::size_t>(config_.hidden);
    const std::size_t da = static_cast<std::size_t>(config_.attention_dim);
    const std::size_t pos_w = trajectory::position_width(config_.position_frequencies);
    const std::size_t tok_pos_w = trajectory::position_width(trajectory::kTokenFrequencies);
    const std::size_t tok_w = static_cast<std::size_t>(config_.hash.width());
    const std::size_t in_w = 2 + pos_w + config_.time_width();
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, double fan_in, double gain = 1.0) {
      std::normal_distribution<double> n(0.0, gain / std::sqrt(fan_in));
      Array w = Array::matrix(in, out);
      for (auto& v : w.data()) v = n(rng);
      params_.add(name, std::move(w));
    };
    auto bias = [&](const std::string& name, std::size_t n) { params_.add(name, Array(tensor::Shape{n}, 0.0)); };
    // Input rows are [noisy, first, position..., time...].
    dense("embed.weight", in_w, h, static_cast<double>(in_w));
    bias("embed.bias", h);
    dense("attn.query", h, da, static_cast<double>(h));
    dense("attn.key_position", tok_pos_w, da, static_cast<double>(tok_pos_w + tok_w));
    dense("attn.key_trajectory", tok_w, da, static_cast<double>(tok_pos_w + tok_w));
    dense("attn.value_position", tok_pos_w, da, static_cast<double>(tok_pos_w + tok_w));
    dense("attn.value_trajectory", tok_w, da, static_cast<double>(tok_pos_w + tok_w));
    dense("attn.out", da, h, static_cast<double>(da));
    dense("mlp.0.weight", h, h, static_cast<double>(h));
    bias("mlp.0.bias", h);
    dense("mlp.1.weight", h, h, static_cast<double>(h));
    bias("mlp.1.bias", h);
    dense("head.weight", h, 1, static_cast<double>(h), 0.1);
    bias("head.bias", 1);
    table_id_ = params_.add("hash_table", hashgrid::FeatureTable::random(config_.hash, config_.table_init, rng).values);
    build_constants();
  }

  /// Rebuilds a model around an existing parameter store (checkpoint load).
  VelocityModel(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    VelocityModel fresh(config_, 0);
    if (fresh.params_.size() != params_.size()) throw std::invalid_argument("model: parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (fresh.params_.name(i) != params_.name(i) || !fresh.params_.value(i).same_shape(params_.value(i))) {
        throw std::invalid_argument("model: parameter '" + params_.name(i) + "' does not match the configuration");
      }
    }
    table_id_ = params_.id("hash_table");
    restored_ = true;
    build_constants();
  }

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t table_id() const noexcept { return table_id_; }
  const Array& table() const { return params_.value(table_id_); }
  const Array& token_positions() const noexcept { return token_pos_; }
  /// True when built around a loaded parameter store rather than a fresh initialization.
  bool restored() const noexcept { return restored_; }

  /// Velocity for the given pixels (all pixels when `pixels` is empty), as an (n x 1) column.
  /// `noisy` and `first` hold full frames.
  Var forward(Tape& tape, std::span<const double> noisy, double t, std::span<const double> first, Var token_features,
              std::span<const std::size_t> pixels = {}) const {
    const std::size_t n_all = config_.pixels();
    if (noisy.size() != n_all || first.size() != n_all) {
      throw std::invalid_argument("model: expected frames of " + std::to_string(n_all) + " pixels, got " +
                                  std::to_string(noisy.size()) + " and " + std::to_string(first.size()));
    }
    const std::size_t n = pixels.empty() ? n_all : pixels.size();
    const auto temb = time_embedding(t, config_.time_frequencies);
    const std::size_t pos_w = pixel_pos_.cols();
    const std::size_t in_w = 2 + pos_w + temb.size();
    Array input = Array::matrix(n, in_w);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = pixels.empty() ? i : pixels[i];
      if (p >= n_all) throw std::invalid_argument("model: pixel index out of range");
      double* row = input.ptr() + i * in_w;
      row[0] = noisy[p];
      row[1] = first[p];
      std::copy_n(pixel_pos_.ptr() + p * pos_w, pos_w, row + 2);
      std::copy(temb.begin(), temb.end(), row + 2 + pos_w);
    }

    auto P = [&](const char* name) { return tape.param(params_, name); };
    using namespace tensor;
    Var e = silu(affine(tape.constant(std::move(input)), P("embed.weight"), P("embed.bias")));

    Var tok_pos = tape.constant(token_pos_);
    Var q = affine(e, P("attn.query"));
    Var k = add(affine(tok_pos, P("attn.key_position")), affine(token_features, P("attn.key_trajectory")));
    Var v = add(affine(tok_pos, P("attn.value_position")), affine(token_features, P("attn.value_trajectory")));
    Var h = add(e, affine(attention(q, k, v), P("attn.out")));

    Var m = silu(affine(h, P("mlp.0.weight"), P("mlp.0.bias")));
    m = silu(affine(m, P("mlp.1.weight"), P("mlp.1.bias")));
    return affine(m, P("head.weight"), P("head.bias"));
  }

 private:
  void build_constants() {
    const std::size_t pos_w = trajectory::position_width(config_.position_frequencies);
    pixel_pos_ = Array::matrix(config_.pixels(), pos_w);
    for (std::size_t r = 0; r < config_.height; ++r) {
      for (std::size_t c = 0; c < config_.width; ++c) {
        const auto pt = trajectory::pixel_point(r, c, config_.height, config_.width, 0.0);
        const auto e = trajectory::position_embedding(pt.x, pt.y, config_.position_frequencies);
        std::copy(e.begin(), e.end(), pixel_pos_.ptr() + (r * config_.width + c) * pos_w);
      }
    }
    token_pos_ = trajectory::token_positions(config_.grid_h, config_.grid_w);
  }

  ModelConfig config_;
  ParamStore params_;
  std::size_t table_id_ = 0;
  bool restored_ = false;
  Array pixel_pos_;
  Array token_pos_;
};

}  // namespace fym::flowmatch
