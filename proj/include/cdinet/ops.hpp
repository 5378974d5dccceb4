#pragma once

#include <vector>

#include "cdinet/autograd.hpp"

namespace cdinet::ops {

/// 2-D convolution, stride 1, zero padding `pad`.
/// weight: (out_c, in_c, k, k); bias: (1, out_c, 1, 1).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int pad);

/// 2x2 max-pool, stride 2. H and W must be even.
Var max_pool2(const Var& x);

/// Max over the channel axis; output has exactly one channel.
Var channel_max(const Var& x);

/// (N,C,H,W) -> (N,C,1,1) spatial mean.
Var global_avg_pool(const Var& x);

/// x: (N,C,1,1); weight: (M,C,1,1); bias: (1,M,1,1) -> (N,M,1,1).
Var fully_connected(const Var& x, const Var& weight, const Var& bias);

Var relu(const Var& x);
Var sigmoid(const Var& x);

/// Elementwise sum, identical shapes.
Var add(const Var& a, const Var& b);

/// Elementwise product. `b` may equal `a`'s shape, or broadcast as a spatial
/// mask (N,1,H,W) or a channel weight vector (N,C,1,1).
Var mul(const Var& a, const Var& b);

Var concat_channels(const std::vector<Var>& xs);

/// Bilinear resize, align_corners=false:
///   src = max(0, (dst + 0.5) * in/out - 0.5), taps floor(src) and its
///   clamped right neighbor, lambda = src - floor(src).
Var upsample_bilinear(const Var& x, int out_h, int out_w);

/// Per-sample, per-channel standardization over H*W with learned affine.
/// gamma/beta: (1,C,1,1).
Var instance_norm(const Var& x, const Var& gamma, const Var& beta,
                  double eps = 1e-5);

/// Mean binary cross-entropy; predictions clamped to [eps, 1-eps].
Var bce_mean(const Var& pred, const Tensor& target, double clamp_eps = 1e-7);

/// Sum of all entries, as a (1,1,1,1) scalar.
Var sum(const Var& x);

// Call counter used by structural tests of the dense decoder.
long upsample_call_count();
void reset_upsample_call_count();

}  // namespace cdinet::ops
