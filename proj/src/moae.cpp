#include "moae.hpp"

#include <cmath>

namespace moaecr {

void MoAEConfig::validate() const {
  if (d < 1 || h < 1 || m < 1 || s < 1)
    throw ConfigError("moae config: d, h, m, s must all be >= 1");
  if (d % h != 0)
    throw ConfigError("moae config: width " + std::to_string(d) +
                      " not divisible by head count " + std::to_string(h));
  if (expert_hidden < 0) throw ConfigError("moae config: expert_hidden must be >= 0");
}

Tensor uniform_init(Shape shape, double bound, SeededRng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data_mut()) v = (rng.uniform() * 2.0 - 1.0) * bound;
  return t;
}

MoAELayer MoAELayer::init(const MoAEConfig& cfg, SeededRng& rng) {
  cfg.validate();
  MoAELayer l;
  l.cfg = cfg;
  int64_t d = cfg.d, dh = cfg.d_h(), ns = cfg.n_slots(), hid = cfg.hidden();
  double bd = 1.0 / std::sqrt(static_cast<double>(d));
  double bdh = 1.0 / std::sqrt(static_cast<double>(dh));
  double bhid = 1.0 / std::sqrt(static_cast<double>(hid));
  l.w_q = uniform_init({d, d}, bd, rng);
  l.w_k = uniform_init({d, d}, bd, rng);
  l.w_v = uniform_init({d, d}, bd, rng);
  l.slots = uniform_init({cfg.h, dh, ns}, bdh, rng);
  for (int e = 0; e < cfg.m; ++e) {
    l.expert_w1.push_back(uniform_init({dh, hid}, bdh, rng));
    l.expert_b1.push_back(uniform_init({hid}, bdh, rng));
    l.expert_w2.push_back(uniform_init({hid, dh}, bhid, rng));
    l.expert_b2.push_back(uniform_init({dh}, bhid, rng));
  }
  l.w_out = Tensor::zeros({d, d}, true);
  return l;
}

int64_t MoAELayer::parameter_count(const MoAEConfig& cfg) {
  cfg.validate();
  int64_t d = cfg.d, dh = cfg.d_h(), ns = cfg.n_slots(), hid = cfg.hidden();
  return 4 * d * d + cfg.h * dh * ns + cfg.m * (dh * hid + hid + hid * dh + dh);
}

std::vector<std::pair<std::string, Tensor>> MoAELayer::parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> ps;
  ps.emplace_back(prefix + "w_q", w_q);
  ps.emplace_back(prefix + "w_k", w_k);
  ps.emplace_back(prefix + "w_v", w_v);
  ps.emplace_back(prefix + "slots", slots);
  for (int e = 0; e < cfg.m; ++e) {
    std::string ep = prefix + "expert" + std::to_string(e) + ".";
    ps.emplace_back(ep + "w1", expert_w1[static_cast<size_t>(e)]);
    ps.emplace_back(ep + "b1", expert_b1[static_cast<size_t>(e)]);
    ps.emplace_back(ep + "w2", expert_w2[static_cast<size_t>(e)]);
    ps.emplace_back(ep + "b2", expert_b2[static_cast<size_t>(e)]);
  }
  ps.emplace_back(prefix + "w_out", w_out);
  return ps;
}

Tensor attention_heads(const Tensor& x, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv, int h) {
  if (x.rank() != 3)
    throw ShapeError("attention: expected [n,p,d], got " + shape_str(x.shape()));
  Tensor qh = split_heads(matmul(x, wq), h);  // [n,h,p,d_h]
  Tensor kh = split_heads(matmul(x, wk), h);
  Tensor vh = split_heads(matmul(x, wv), h);
  double scale = 1.0 / std::sqrt(static_cast<double>(qh.dim(3)));
  Tensor scores = matmul(qh, permute(kh, {0, 1, 3, 2})) * scale;  // [n,h,p,p]
  return matmul(softmax(scores, 3), vh);
}

Tensor multi_head_attention(const Tensor& x, const MoAELayer& layer) {
  if (x.dim(2) != layer.cfg.d)
    throw ShapeError("attention: input width " + std::to_string(x.dim(2)) +
                     " does not match layer width " + std::to_string(layer.cfg.d));
  return attention_heads(x, layer.w_q, layer.w_k, layer.w_v, layer.cfg.h);
}

std::pair<Tensor, RoutingWeights> soft_dispatch(const Tensor& p_head, const Tensor& slots) {
  if (p_head.rank() != 3 || slots.rank() != 2 || p_head.dim(2) != slots.dim(0))
    throw ShapeError("soft_dispatch: got tokens " + shape_str(p_head.shape()) +
                     " and slots " + shape_str(slots.shape()));
  Tensor logits = matmul(p_head, slots);  // [n,p,slots]
  RoutingWeights r;
  r.dispatch = softmax(logits, 1);  // over tokens
  r.combine = softmax(logits, 2);   // over slots
  Tensor slot_inputs = matmul(permute(r.dispatch, {0, 2, 1}), p_head);  // [n,slots,d_h]
  return {slot_inputs, r};
}

Tensor apply_experts(const Tensor& slot_inputs, const MoAELayer& layer) {
  const MoAEConfig& cfg = layer.cfg;
  if (slot_inputs.rank() != 3 || slot_inputs.dim(1) != cfg.n_slots())
    throw ConfigError("apply_experts: expected " + std::to_string(cfg.n_slots()) +
                      " slots, got input " + shape_str(slot_inputs.shape()));
  std::vector<Tensor> outs;
  for (int e = 0; e < cfg.m; ++e) {
    Tensor slab = narrow(slot_inputs, 1, static_cast<int64_t>(e) * cfg.s, cfg.s);
    Tensor h1 = relu(matmul(slab, layer.expert_w1[static_cast<size_t>(e)]) +
                     layer.expert_b1[static_cast<size_t>(e)]);
    outs.push_back(matmul(h1, layer.expert_w2[static_cast<size_t>(e)]) +
                   layer.expert_b2[static_cast<size_t>(e)]);
  }
  return cfg.m == 1 ? outs[0] : concat(outs, 1);
}

Tensor soft_combine(const Tensor& y, const RoutingWeights& routing) {
  return matmul(routing.combine, y);  // [n,p,slots]x[n,slots,d_h]
}

Tensor moae_forward(const Tensor& x, const MoAELayer& layer) {
  const MoAEConfig& cfg = layer.cfg;
  Tensor p = multi_head_attention(x, layer);  // [n,h,p,d_h]
  int64_t n = p.dim(0), pl = p.dim(2), dh = p.dim(3);
  std::vector<Tensor> head_outs;
  for (int hh = 0; hh < cfg.h; ++hh) {
    Tensor ph = reshape(narrow(p, 1, hh, 1), {n, pl, dh});
    Tensor sl = reshape(narrow(layer.slots, 0, hh, 1), {dh, cfg.n_slots()});
    auto [slot_inputs, routing] = soft_dispatch(ph, sl);
    head_outs.push_back(soft_combine(apply_experts(slot_inputs, layer), routing));
  }
  Tensor merged = cfg.h == 1 ? head_outs[0] : concat(head_outs, 2);  // [n,p,d]
  return matmul(merged, layer.w_out);
}

Tensor softmoe_forward(const Tensor& x, const MoAELayer& layer) {
  const MoAEConfig& cfg = layer.cfg;
  if (cfg.h != 1) throw ConfigError("softmoe baseline requires a single head");
  if (x.rank() != 3 || x.dim(2) != cfg.d)
    throw ShapeError("softmoe: expected [n,p," + std::to_string(cfg.d) + "], got " +
                     shape_str(x.shape()));
  Tensor sl = reshape(layer.slots, {cfg.d, cfg.n_slots()});
  auto [slot_inputs, routing] = soft_dispatch(x, sl);
  Tensor out = soft_combine(apply_experts(slot_inputs, layer), routing);
  return matmul(out, layer.w_out);
}

Block Block::init(int64_t d, int attn_heads, int64_t mlp_hidden, Sublayer kind,
                  const MoAEConfig& moae_cfg, SeededRng& rng) {
  if (d < 1 || attn_heads < 1 || d % attn_heads != 0)
    throw ConfigError("block: width " + std::to_string(d) +
                      " not divisible by attention head count " + std::to_string(attn_heads));
  Block b;
  b.d = d;
  b.attn_heads = attn_heads;
  b.mlp_hidden = mlp_hidden > 0 ? mlp_hidden : 2 * d;
  b.kind = kind;
  double bd = 1.0 / std::sqrt(static_cast<double>(d));
  double bh = 1.0 / std::sqrt(static_cast<double>(b.mlp_hidden));
  b.ln1_g = Tensor::full({d}, 1.0, true);
  b.ln1_b = Tensor::zeros({d}, true);
  b.ln2_g = Tensor::full({d}, 1.0, true);
  b.ln2_b = Tensor::zeros({d}, true);
  b.attn_wq = uniform_init({d, d}, bd, rng);
  b.attn_wk = uniform_init({d, d}, bd, rng);
  b.attn_wv = uniform_init({d, d}, bd, rng);
  b.attn_wo = uniform_init({d, d}, bd, rng);
  b.mlp_w1 = uniform_init({d, b.mlp_hidden}, bd, rng);
  b.mlp_b1 = uniform_init({b.mlp_hidden}, bd, rng);
  b.mlp_w2 = uniform_init({b.mlp_hidden, d}, bh, rng);
  b.mlp_b2 = uniform_init({d}, bh, rng);
  if (kind != Sublayer::none) {
    if (moae_cfg.d != d)
      throw ConfigError("block: expert sublayer width " + std::to_string(moae_cfg.d) +
                        " does not match block width " + std::to_string(d));
    b.moe = MoAELayer::init(moae_cfg, rng);
  }
  return b;
}

std::vector<std::pair<std::string, Tensor>> Block::parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> ps;
  ps.emplace_back(prefix + "ln1_g", ln1_g);
  ps.emplace_back(prefix + "ln1_b", ln1_b);
  ps.emplace_back(prefix + "ln2_g", ln2_g);
  ps.emplace_back(prefix + "ln2_b", ln2_b);
  ps.emplace_back(prefix + "attn.wq", attn_wq);
  ps.emplace_back(prefix + "attn.wk", attn_wk);
  ps.emplace_back(prefix + "attn.wv", attn_wv);
  ps.emplace_back(prefix + "attn.wo", attn_wo);
  ps.emplace_back(prefix + "mlp.w1", mlp_w1);
  ps.emplace_back(prefix + "mlp.b1", mlp_b1);
  ps.emplace_back(prefix + "mlp.w2", mlp_w2);
  ps.emplace_back(prefix + "mlp.b2", mlp_b2);
  if (moe) {
    auto mp = moe->parameters(prefix + "moe.");
    ps.insert(ps.end(), mp.begin(), mp.end());
  }
  return ps;
}

Tensor block_forward(const Tensor& x, const Block& b) {
  if (x.rank() != 3 || x.dim(2) != b.d)
    throw ShapeError("block: expected [n,p," + std::to_string(b.d) + "], got " +
                     shape_str(x.shape()));
  Tensor a_in = layer_norm(x, b.ln1_g, b.ln1_b);
  Tensor heads = attention_heads(a_in, b.attn_wq, b.attn_wk, b.attn_wv, b.attn_heads);
  Tensor x1 = x + matmul(merge_heads(heads), b.attn_wo);
  Tensor n2 = layer_norm(x1, b.ln2_g, b.ln2_b);
  Tensor h1 = relu(matmul(n2, b.mlp_w1) + b.mlp_b1);
  Tensor out = x1 + (matmul(h1, b.mlp_w2) + b.mlp_b2);
  if (b.kind == Sublayer::moae) out = out + moae_forward(n2, *b.moe);
  else if (b.kind == Sublayer::softmoe) out = out + softmoe_forward(n2, *b.moe);
  return out;
}

}  // namespace moaecr
