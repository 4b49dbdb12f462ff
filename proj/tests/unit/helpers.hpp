#pragma once

#include "bfvae/rng.hpp"
#include "bfvae/tensor.hpp"
#include "bfvae/vae.hpp"

namespace testutil {

inline bfvae::Tensor2 randn(std::size_t r, std::size_t c, std::uint64_t seed) {
  bfvae::Rng rng(seed);
  return bfvae::standard_normal(r, c, rng);
}

/// Small architecture for fast tests (widths ≤ 16).
inline bfvae::vae::Architecture tiny_arch() {
  bfvae::vae::Architecture a;
  a.encoder_hidden = {12, 8};
  a.decoder_hidden = {8, 12};
  a.dropout = 0.0;
  a.disc_hidden_layers = 2;
  a.disc_width = 8;
  a.init_kaiming_a = 0.0;
  return a;
}

inline double max_abs_diff(const bfvae::Tensor2& a, const bfvae::Tensor2& b) {
  bfvae::require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testutil
