#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace moaecr {

struct MoAEConfig {
  int64_t d = 32;             // model width
  int h = 2;                  // attention heads
  int m = 4;                  // experts
  int s = 1;                  // slots per expert
  int64_t expert_hidden = 0;  // 0 picks 2*d_h

  void validate() const;
  int64_t d_h() const { return d / h; }
  int64_t n_slots() const { return static_cast<int64_t>(m) * s; }
  int64_t hidden() const { return expert_hidden > 0 ? expert_hidden : 2 * d_h(); }
};

// Slots are expert-major: slot i is consumed by expert i/s. Experts are
// shared across heads and act on d_h-wide head outputs. w_out starts at
// zero so a fresh layer is a no-op inside a residual block.
struct MoAELayer {
  MoAEConfig cfg;
  Tensor w_q, w_k, w_v;  // [d,d], no bias
  Tensor w_out;          // [d,d]
  Tensor slots;          // [h, d_h, m*s]
  std::vector<Tensor> expert_w1, expert_b1, expert_w2, expert_b2;

  static MoAELayer init(const MoAEConfig& cfg, SeededRng& rng);
  static int64_t parameter_count(const MoAEConfig& cfg);
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

struct RoutingWeights {
  Tensor dispatch;  // [n,p,slots]; per slot, the column over tokens sums to 1
  Tensor combine;   // [n,p,slots]; per token, the row over slots sums to 1
};

Tensor uniform_init(Shape shape, double bound, SeededRng& rng);

// [n,p,d] -> per-head attention outputs [n,h,p,d_h]
Tensor attention_heads(const Tensor& x, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv, int h);
Tensor multi_head_attention(const Tensor& x, const MoAELayer& layer);

// slot_inputs[slot] = sum_tokens dispatch[token,slot] * p_head[token]
std::pair<Tensor, RoutingWeights> soft_dispatch(const Tensor& p_head, const Tensor& slots);
Tensor apply_experts(const Tensor& slot_inputs, const MoAELayer& layer);
Tensor soft_combine(const Tensor& y, const RoutingWeights& routing);

Tensor moae_forward(const Tensor& x, const MoAELayer& layer);
// No attention stage, tokens routed directly; requires cfg.h == 1.
Tensor softmoe_forward(const Tensor& x, const MoAELayer& layer);

enum class Sublayer { none, softmoe, moae };

// Pre-norm transformer block with the expert sublayer running in parallel
// with the MLP off the same second layer-norm:
//   x1  = x + SelfAttn(LN1(x))
//   out = x1 + MLP(LN2(x1)) + MoE(LN2(x1))
struct Block {
  int64_t d = 0;
  int attn_heads = 1;
  int64_t mlp_hidden = 0;
  Sublayer kind = Sublayer::none;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor attn_wq, attn_wk, attn_wv, attn_wo;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::optional<MoAELayer> moe;

  static Block init(int64_t d, int attn_heads, int64_t mlp_hidden, Sublayer kind,
                    const MoAEConfig& moae_cfg, SeededRng& rng);
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

Tensor block_forward(const Tensor& x, const Block& b);

}  // namespace moaecr
