#include "gradreg.hpp"

#include <chrono>
#include <cstdio>

#include "crloss.hpp"
#include "encoder.hpp"
#include "moae.hpp"

namespace moaecr {

namespace {

Tensor rnd(Shape shape, SeededRng& rng, double lo = -2.0, double hi = 2.0) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero so abs/relu/div kinks stay rare.
Tensor rnd_away(Shape shape, SeededRng& rng, double min_mag = 0.4) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) {
    const double mag = rng.uniform(min_mag, 2.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from(std::move(shape), std::move(v));
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so the
// whole Jacobian participates.
std::function<Tensor(const Tensor&)> weigher(const Tensor& like,
                                             SeededRng& rng) {
  Tensor w = rnd(like.shape(), rng, -1.0, 1.0);
  return [w](const Tensor& t) { return sum(mul(t, w)); };
}

std::vector<int> balanced_labels(int64_t n, SeededRng& rng) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  rng.shuffle(labels);
  return labels;
}

void fill_random(Tensor t, SeededRng& rng, double bound) {
  auto d = t.data_mut();
  for (double& x : d) x = rng.uniform(-bound, bound);
}

MoAELayer make_layer(int64_t d, int h, int m, int s, SeededRng& rng,
                     bool random_out) {
  MoAEConfig cfg;
  cfg.d = d;
  cfg.h = h;
  cfg.m = m;
  cfg.s = s;
  MoAELayer layer = MoAELayer::init(cfg, rng);
  if (random_out) fill_random(layer.w_out, rng, 0.5);  // zero init is a no-op
  return layer;
}

GradOpEntry unary(const std::string& name,
                  std::function<Tensor(const Tensor&)> op, bool away_from_zero,
                  double lo = -2.0, double hi = 2.0) {
  return {name, [op, away_from_zero, lo, hi](SeededRng& rng) {
            Tensor x = away_from_zero ? rnd_away({3, 4}, rng)
                                      : rnd({3, 4}, rng, lo, hi);
            Tensor shape_sample;
            {
              NoGradGuard ng;
              shape_sample = op(x);
            }
            auto w = weigher(shape_sample, rng);
            GradOpCase c;
            c.f = [op, w](const std::vector<Tensor>& in) {
              return w(op(in[0]));
            };
            c.inputs = {x};
            return c;
          }};
}

GradOpEntry binary(const std::string& name,
                   std::function<Tensor(const Tensor&, const Tensor&)> op,
                   bool b_away_from_zero) {
  return {name, [op, b_away_from_zero](SeededRng& rng) {
            Tensor a = rnd({3, 4}, rng);
            Tensor b = b_away_from_zero ? rnd_away({3, 4}, rng)
                                        : rnd({3, 4}, rng);
            auto w = weigher(a, rng);
            GradOpCase c;
            c.f = [op, w](const std::vector<Tensor>& in) {
              return w(op(in[0], in[1]));
            };
            c.inputs = {a, b};
            return c;
          }};
}

std::vector<GradOpEntry> build_registry() {
  std::vector<GradOpEntry> reg;

  // ---- elementwise and scalar arithmetic ----
  reg.push_back(binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, false));
  reg.push_back(binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, false));
  reg.push_back(binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, false));
  reg.push_back(binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, true));
  reg.push_back(unary("neg", [](const Tensor& a) { return neg(a); }, false));
  reg.push_back(unary("scalar_add", [](const Tensor& a) { return a + 1.75; }, false));
  reg.push_back(unary("scalar_sub", [](const Tensor& a) { return 0.5 - a; }, false));
  reg.push_back(unary("scalar_mul", [](const Tensor& a) { return a * -1.5; }, false));
  reg.push_back(unary("scalar_div", [](const Tensor& a) { return 3.0 / a; }, true));
  reg.push_back(unary("abs", [](const Tensor& a) { return abs(a); }, true));
  reg.push_back(unary("square", [](const Tensor& a) { return square(a); }, false));
  reg.push_back(unary("sqrt", [](const Tensor& a) { return sqrt(a); }, false, 0.3, 3.0));
  reg.push_back(unary("exp", [](const Tensor& a) { return exp(a); }, false));
  reg.push_back(unary("hinge", [](const Tensor& a) { return hinge(a, 0.5); }, false));
  reg.push_back(unary("relu", [](const Tensor& a) { return relu(a); }, true));

  // ---- movement and structure ----
  reg.push_back({"matmul", [](SeededRng& rng) {
                   Tensor a = rnd({3, 4}, rng);
                   Tensor b = rnd({4, 2}, rng);
                   Tensor probe = rnd({3, 2}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(matmul(in[0], in[1]), probe));
                   };
                   c.inputs = {a, b};
                   return c;
                 }});
  reg.push_back(unary("transpose", [](const Tensor& a) { return transpose(a); }, false));
  reg.push_back({"permute", [](SeededRng& rng) {
                   Tensor x = rnd({2, 3, 4}, rng);
                   Tensor probe = rnd({4, 2, 3}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(permute(in[0], {2, 0, 1}), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back(unary("reshape", [](const Tensor& a) { return reshape(a, {2, 6}); }, false));
  reg.push_back({"broadcast_to", [](SeededRng& rng) {
                   Tensor x = rnd({1, 4}, rng);
                   Tensor probe = rnd({3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(broadcast_to(in[0], {3, 4}), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"narrow", [](SeededRng& rng) {
                   Tensor x = rnd({3, 5}, rng);
                   Tensor probe = rnd({3, 3}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(narrow(in[0], 1, 1, 3), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"concat", [](SeededRng& rng) {
                   Tensor a = rnd({2, 3}, rng);
                   Tensor b = rnd({2, 2}, rng);
                   Tensor probe = rnd({2, 5}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(concat({in[0], in[1]}, 1), probe));
                   };
                   c.inputs = {a, b};
                   return c;
                 }});
  reg.push_back({"gather_rows", [](SeededRng& rng) {
                   Tensor x = rnd({5, 3}, rng);
                   Tensor probe = rnd({4, 3}, rng, -1.0, 1.0);
                   std::vector<int64_t> rows = {0, 2, 2, 4};
                   GradOpCase c;
                   c.f = [probe, rows](const std::vector<Tensor>& in) {
                     return sum(mul(gather_rows(in[0], rows), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"split_heads", [](SeededRng& rng) {
                   Tensor x = rnd({2, 3, 6}, rng);
                   Tensor probe = rnd({2, 2, 3, 3}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(split_heads(in[0], 2), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"merge_heads", [](SeededRng& rng) {
                   Tensor x = rnd({2, 2, 3, 3}, rng);
                   Tensor probe = rnd({2, 3, 6}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(merge_heads(in[0]), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});

  // ---- reductions and normalizations ----
  reg.push_back(unary("sum_all", [](const Tensor& a) { return sum(a); }, false));
  reg.push_back({"sum_axes", [](SeededRng& rng) {
                   Tensor x = rnd({2, 3, 4}, rng);
                   Tensor probe = rnd({2, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(sum(in[0], {1}), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back(unary("mean_all", [](const Tensor& a) { return mean(a); }, false));
  reg.push_back({"mean_axes", [](SeededRng& rng) {
                   Tensor x = rnd({2, 3, 4}, rng);
                   Tensor probe = rnd({3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(mean(in[0], {0}), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back(unary("softmax", [](const Tensor& a) { return softmax(a, 1); }, false));
  reg.push_back(unary("logsumexp", [](const Tensor& a) { return logsumexp(a, 1); }, false));
  reg.push_back(unary("l2_normalize_rows",
                      [](const Tensor& a) { return l2_normalize_rows(a); },
                      true));
  reg.push_back({"layer_norm", [](SeededRng& rng) {
                   Tensor x = rnd({3, 6}, rng);
                   Tensor g = rnd({6}, rng, 0.5, 1.5);
                   Tensor b = rnd({6}, rng, -0.5, 0.5);
                   auto w = weigher(x, rng);
                   GradOpCase c;
                   c.f = [w](const std::vector<Tensor>& in) {
                     return w(layer_norm(in[0], in[1], in[2]));
                   };
                   c.inputs = {x, g, b};
                   return c;
                 }});

  // ---- attention and expert routing ----
  reg.push_back({"attention_heads", [](SeededRng& rng) {
                   Tensor x = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   Tensor wq = rnd({8, 8}, rng, -0.5, 0.5);
                   Tensor wk = rnd({8, 8}, rng, -0.5, 0.5);
                   Tensor wv = rnd({8, 8}, rng, -0.5, 0.5);
                   Tensor probe = rnd({2, 2, 3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(
                         mul(attention_heads(in[0], in[1], in[2], in[3], 2),
                             probe));
                   };
                   c.inputs = {x, wq, wk, wv};
                   return c;
                 }});
  reg.push_back({"multi_head_attention", [](SeededRng& rng) {
                   MoAELayer layer = make_layer(8, 2, 2, 1, rng, false);
                   Tensor x = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 2, 3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [layer, probe](const std::vector<Tensor>& in) {
                     return sum(mul(multi_head_attention(in[0], layer), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"soft_dispatch", [](SeededRng& rng) {
                   Tensor p = rnd({2, 3, 4}, rng, -1.0, 1.0);
                   Tensor slots = rnd({4, 4}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 4, 4}, rng, -1.0, 1.0);
                   Tensor probe_d = rnd({2, 3, 4}, rng, -1.0, 1.0);
                   Tensor probe_c = rnd({2, 3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe, probe_d, probe_c](const std::vector<Tensor>& in) {
                     auto [slot_inputs, routing] = soft_dispatch(in[0], in[1]);
                     return sum(mul(slot_inputs, probe)) +
                            sum(mul(routing.dispatch, probe_d)) +
                            sum(mul(routing.combine, probe_c));
                   };
                   c.inputs = {p, slots};
                   return c;
                 }});
  reg.push_back({"apply_experts", [](SeededRng& rng) {
                   MoAELayer layer = make_layer(8, 2, 2, 2, rng, false);
                   Tensor slot_inputs = rnd({2, 4, 4}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 4, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [layer, probe](const std::vector<Tensor>& in) {
                     return sum(mul(apply_experts(in[0], layer), probe));
                   };
                   c.inputs = {slot_inputs};
                   return c;
                 }});
  reg.push_back({"soft_combine", [](SeededRng& rng) {
                   Tensor p = rnd({2, 3, 4}, rng, -1.0, 1.0);
                   Tensor slots = rnd({4, 4}, rng, -1.0, 1.0);
                   Tensor y = rnd({2, 4, 4}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 3, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     auto routing = soft_dispatch(in[0], in[1]).second;
                     return sum(mul(soft_combine(in[2], routing), probe));
                   };
                   c.inputs = {p, slots, y};
                   return c;
                 }});
  reg.push_back({"moae_forward", [](SeededRng& rng) {
                   MoAELayer layer = make_layer(8, 2, 2, 1, rng, true);
                   Tensor x = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [layer, probe](const std::vector<Tensor>& in) {
                     return sum(mul(moae_forward(in[0], layer), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"softmoe_forward", [](SeededRng& rng) {
                   MoAELayer layer = make_layer(6, 1, 2, 2, rng, true);
                   Tensor x = rnd({2, 3, 6}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 3, 6}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [layer, probe](const std::vector<Tensor>& in) {
                     return sum(mul(softmoe_forward(in[0], layer), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"block_forward", [](SeededRng& rng) {
                   MoAEConfig mc;
                   mc.d = 8;
                   mc.h = 2;
                   mc.m = 2;
                   mc.s = 1;
                   Block b = Block::init(8, 2, 6, Sublayer::moae, mc, rng);
                   fill_random(b.moe->w_out, rng, 0.5);
                   Tensor x = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   Tensor probe = rnd({2, 3, 8}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [b, probe](const std::vector<Tensor>& in) {
                     return sum(mul(block_forward(in[0], b), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});

  // ---- encoder pipeline ----
  reg.push_back({"patchify", [](SeededRng& rng) {
                   Tensor x = rnd({2, 1, 4, 4}, rng);
                   Tensor probe = rnd({2, 4, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     return sum(mul(patchify(in[0], 2), probe));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"encode_features", [](SeededRng& rng) {
                   EncoderConfig cfg;
                   cfg.feature_dim = 8;
                   cfg.token_width = 4;
                   cfg.d = 8;
                   cfg.blocks = 1;
                   cfg.mlp_hidden = 6;
                   cfg.embed_dim = 4;
                   cfg.moae.d = 8;
                   cfg.moae.h = 2;
                   cfg.moae.m = 2;
                   cfg.moae.s = 1;
                   Encoder enc = Encoder::init(cfg, rng);
                   fill_random(enc.blocks[0].moe->w_out, rng, 0.5);
                   Tensor x = rnd({2, 8}, rng, -1.0, 1.0);
                   Tensor probe_e = rnd({2, 4}, rng, -1.0, 1.0);
                   Tensor probe_p = rnd({2, 8}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [enc, probe_e, probe_p](const std::vector<Tensor>& in) {
                     EncodeResult r = encode(in[0], enc);
                     return sum(mul(r.embedding, probe_e)) +
                            sum(mul(r.pooled, probe_p));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"encode_image", [](SeededRng& rng) {
                   EncoderConfig cfg;
                   cfg.image_side = 4;
                   cfg.patch_side = 2;
                   cfg.channels = 1;
                   cfg.d = 8;
                   cfg.blocks = 1;
                   cfg.mlp_hidden = 6;
                   cfg.embed_dim = 4;
                   cfg.moae.d = 8;
                   cfg.moae.h = 2;
                   cfg.moae.m = 2;
                   cfg.moae.s = 1;
                   Encoder enc = Encoder::init(cfg, rng);
                   fill_random(enc.blocks[0].moe->w_out, rng, 0.5);
                   Tensor x = rnd({2, 1, 4, 4}, rng, -1.0, 1.0);
                   Tensor probe_e = rnd({2, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [enc, probe_e](const std::vector<Tensor>& in) {
                     return sum(mul(encode(in[0], enc).embedding, probe_e));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"similarity_matrix", [](SeededRng& rng) {
                   ClassTextEmbeddings prompts = ClassTextEmbeddings::init(4, rng);
                   Tensor img = rnd({3, 4}, rng, -1.0, 1.0);
                   Tensor probe = rnd({3, 2}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [probe](const std::vector<Tensor>& in) {
                     ClassTextEmbeddings p;
                     p.vectors = in[1];
                     p.log_scale = in[2];
                     return sum(mul(similarity_matrix(in[0], p), probe));
                   };
                   c.inputs = {img, prompts.vectors, prompts.log_scale};
                   return c;
                 }});
  reg.push_back({"contrastive_ce", [](SeededRng& rng) {
                   ClassTextEmbeddings prompts = ClassTextEmbeddings::init(4, rng);
                   Tensor img = rnd({2, 4}, rng, -1.0, 1.0);
                   GradOpCase c;
                   c.f = [](const std::vector<Tensor>& in) {
                     ClassTextEmbeddings p;
                     p.vectors = in[1];
                     p.log_scale = in[2];
                     return contrastive_ce(similarity_matrix(in[0], p));
                   };
                   c.inputs = {img, prompts.vectors, prompts.log_scale};
                   return c;
                 }});
  reg.push_back({"class_ce", [](SeededRng& rng) {
                   ClassTextEmbeddings prompts = ClassTextEmbeddings::init(4, rng);
                   Tensor img = rnd({4, 4}, rng, -1.0, 1.0);
                   std::vector<int> labels = balanced_labels(4, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     ClassTextEmbeddings p;
                     p.vectors = in[1];
                     p.log_scale = in[2];
                     return class_ce(similarity_matrix(in[0], p), labels);
                   };
                   c.inputs = {img, prompts.vectors, prompts.log_scale};
                   return c;
                 }});

  // ---- class-regularization and baseline losses ----
  reg.push_back({"dm_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 5}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     return dm_loss(
                         center_relation(class_centers(in[0], labels), 0.5));
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"attraction_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 5}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     ClassCenters cc = class_centers(in[0], labels);
                     return attraction_loss(in[0], cc, labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"repulsion_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 5}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     ClassCenters cc = class_centers(in[0], labels);
                     return repulsion_loss(in[0], cc, labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"cdm_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 5}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     ClassCenters cc = class_centers(in[0], labels);
                     return cdm_loss(in[0], cc, labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"total_loss", [](SeededRng& rng) {
                   Tensor a = rnd({3}, rng);
                   Tensor b = rnd({3}, rng);
                   Tensor d = rnd({3}, rng);
                   GradOpCase c;
                   c.f = [](const std::vector<Tensor>& in) {
                     return total_loss(sum(square(in[0])), sum(square(in[1])),
                                       sum(square(in[2])));
                   };
                   c.inputs = {a, b, d};
                   return c;
                 }});
  reg.push_back({"triplet_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 4}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     return triplet_loss(in[0], labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"hard_triplet_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 4}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     return hard_triplet_loss(in[0], labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"npair_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 4}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     return npair_loss(in[0], labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});
  reg.push_back({"supcon_loss", [](SeededRng& rng) {
                   Tensor x = rnd({6, 4}, rng, -1.5, 1.5);
                   std::vector<int> labels = balanced_labels(6, rng);
                   GradOpCase c;
                   c.f = [labels](const std::vector<Tensor>& in) {
                     return supcon_loss(in[0], labels);
                   };
                   c.inputs = {x};
                   return c;
                 }});

  return reg;
}

}  // namespace

const std::vector<GradOpEntry>& gradcheck_registry() {
  static const std::vector<GradOpEntry> reg = build_registry();
  return reg;
}

GradSuiteReport run_gradcheck_suite(int cases_per_op,
                                    const std::string& fault_op) {
  if (cases_per_op < 1) throw ConfigError("cases_per_op must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteReport report;
  const auto& reg = gradcheck_registry();
  for (size_t op_i = 0; op_i < reg.size(); ++op_i) {
    const GradOpEntry& entry = reg[op_i];
    GradOpReport r;
    r.name = entry.name;
    const double fault = entry.name == fault_op ? 0.25 : 0.0;
    for (int c = 0; c < cases_per_op; ++c) {
      SeededRng rng(0x5EEDull + (op_i + 1) * 100003ull +
                    static_cast<uint64_t>(c) * 0x9E3779B9ull);
      GradOpCase gc = entry.make_case(rng);
      GradcheckResult res =
          gradcheck(gc.f, std::move(gc.inputs), 1e-5, 1e-4, fault);
      ++r.cases;
      r.checked += res.checked;
      r.skipped += res.skipped;
      r.max_rel_err = std::max(r.max_rel_err, res.max_rel_err);
      if (!res.pass) {
        r.pass = false;
        if (r.detail.empty() && !res.notes.empty()) {
          char buf[256];
          std::snprintf(buf, sizeof buf, "case %d: %s", c,
                        res.notes.front().c_str());
          r.detail = buf;
        }
      }
    }
    report.all_pass = report.all_pass && r.pass;
    report.ops.push_back(std::move(r));
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

std::string GradSuiteReport::to_text() const {
  std::string out;
  char line[320];
  for (const GradOpReport& r : ops) {
    std::snprintf(line, sizeof line,
                  "%s %-20s cases=%lld checked=%lld skipped=%lld max_rel=%.3g",
                  r.pass ? "PASS" : "FAIL", r.name.c_str(),
                  static_cast<long long>(r.cases),
                  static_cast<long long>(r.checked),
                  static_cast<long long>(r.skipped), r.max_rel_err);
    out += line;
    if (!r.detail.empty()) {
      out += "  [";
      out += r.detail;
      out += "]";
    }
    out += "\n";
  }
  std::snprintf(line, sizeof line, "%s: %zu ops, %.0f ms\n",
                all_pass ? "ALL PASS" : "FAILURES PRESENT", ops.size(),
                wall_ms);
  out += line;
  return out;
}

}  // namespace moaecr
