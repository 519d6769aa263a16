#include "encoder.hpp"

#include <cmath>

namespace moaecr {

void EncoderConfig::validate() const {
  if (d < 1 || blocks < 1 || embed_dim < 1)
    throw ConfigError("encoder config: d, blocks, embed_dim must be >= 1");
  if (feature_mode()) {
    if (token_width < 1 || feature_dim % token_width != 0)
      throw ConfigError("encoder config: feature_dim " + std::to_string(feature_dim) +
                        " not divisible by token_width " + std::to_string(token_width));
  } else {
    if (image_side < 1 || patch_side < 1 || channels < 1)
      throw ConfigError("encoder config: image_side, patch_side, channels must be >= 1");
    if (image_side % patch_side != 0)
      throw ConfigError("encoder config: image_side " + std::to_string(image_side) +
                        " not divisible by patch_side " + std::to_string(patch_side));
  }
  if (moae.d != d)
    throw ConfigError("encoder config: expert sublayer width " + std::to_string(moae.d) +
                      " does not match encoder width " + std::to_string(d));
  moae.validate();
}

int64_t EncoderConfig::tokens() const {
  int64_t grid = feature_mode() ? feature_dim / token_width
                                : (image_side / patch_side) * (image_side / patch_side);
  return grid + 1;
}

Encoder Encoder::init(const EncoderConfig& cfg, SeededRng& rng) {
  cfg.validate();
  Encoder e;
  e.cfg = cfg;
  int64_t pd = cfg.patch_dim(), d = cfg.d, p = cfg.tokens();
  double bpd = 1.0 / std::sqrt(static_cast<double>(pd));
  double bd = 1.0 / std::sqrt(static_cast<double>(d));
  e.patch_embed = uniform_init({pd, d}, bpd, rng);
  e.patch_bias = uniform_init({d}, bpd, rng);
  e.cls_token = uniform_init({1, 1, d}, bd, rng);
  e.positions = uniform_init({1, p, d}, bd, rng);
  for (int b = 0; b < cfg.blocks; ++b)
    e.blocks.push_back(Block::init(d, cfg.moae.h, cfg.mlp_hidden, cfg.sublayer, cfg.moae, rng));
  e.head_w = uniform_init({d, cfg.embed_dim}, bd, rng);
  e.head_b = uniform_init({cfg.embed_dim}, bd, rng);
  return e;
}

std::vector<std::pair<std::string, Tensor>> Encoder::parameters() const {
  std::vector<std::pair<std::string, Tensor>> ps;
  ps.emplace_back("patch_embed", patch_embed);
  ps.emplace_back("patch_bias", patch_bias);
  ps.emplace_back("cls_token", cls_token);
  ps.emplace_back("positions", positions);
  for (size_t b = 0; b < blocks.size(); ++b) {
    auto bp = blocks[b].parameters("block" + std::to_string(b) + ".");
    ps.insert(ps.end(), bp.begin(), bp.end());
  }
  ps.emplace_back("head_w", head_w);
  ps.emplace_back("head_b", head_b);
  return ps;
}

ClassTextEmbeddings ClassTextEmbeddings::init(int64_t embed_dim, SeededRng& rng) {
  if (embed_dim < 1) throw ConfigError("class embeddings: embed_dim must be >= 1");
  ClassTextEmbeddings t;
  t.vectors = uniform_init({2, embed_dim}, 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng);
  t.log_scale = Tensor::from({}, {std::log(14.3)}, true);
  return t;
}

std::vector<std::pair<std::string, Tensor>> ClassTextEmbeddings::parameters() const {
  return {{"class_vectors", vectors}, {"log_scale", log_scale}};
}

Tensor patchify(const Tensor& images, int64_t patch_side) {
  if (images.rank() != 4)
    throw ShapeError("patchify: expected [n,c,H,W], got " + shape_str(images.shape()));
  int64_t n = images.dim(0), c = images.dim(1), hh = images.dim(2), ww = images.dim(3);
  if (hh % patch_side != 0 || ww % patch_side != 0)
    throw ConfigError("patchify: image " + shape_str(images.shape()) +
                      " not divisible into " + std::to_string(patch_side) + "-pixel patches");
  int64_t gh = hh / patch_side, gw = ww / patch_side;
  Tensor grid = reshape(images, {n, c, gh, patch_side, gw, patch_side});
  Tensor ordered = permute(grid, {0, 2, 4, 1, 3, 5});  // [n,gh,gw,c,ps,ps]
  return reshape(ordered, {n, gh * gw, c * patch_side * patch_side});
}

EncodeResult encode(const Tensor& input, const Encoder& enc) {
  const EncoderConfig& cfg = enc.cfg;
  Tensor patches;
  if (input.rank() == 4) {
    if (cfg.feature_mode())
      throw ShapeError("encode: image input given to a feature-mode encoder");
    if (input.dim(1) != cfg.channels || input.dim(2) != cfg.image_side ||
        input.dim(3) != cfg.image_side)
      throw ShapeError("encode: input " + shape_str(input.shape()) +
                       " does not match configured image geometry");
    patches = patchify(input, cfg.patch_side);
  } else if (input.rank() == 2) {
    if (!cfg.feature_mode())
      throw ShapeError("encode: feature input given to an image-mode encoder");
    if (input.dim(1) != cfg.feature_dim)
      throw ShapeError("encode: input width " + std::to_string(input.dim(1)) +
                       " does not match feature_dim " + std::to_string(cfg.feature_dim));
    patches = reshape(input, {input.dim(0), cfg.feature_dim / cfg.token_width, cfg.token_width});
  } else {
    throw ShapeError("encode: expected [n,c,H,W] or [n,F], got " + shape_str(input.shape()));
  }
  int64_t n = patches.dim(0);
  Tensor tok = matmul(patches, enc.patch_embed) + enc.patch_bias;        // [n,np,d]
  Tensor cls = broadcast_to(enc.cls_token, {n, 1, cfg.d});
  Tensor x = concat({cls, tok}, 1) + enc.positions;                      // [n,p,d]
  for (const Block& b : enc.blocks) x = block_forward(x, b);
  Tensor pooled = reshape(narrow(x, 1, 0, 1), {n, cfg.d});
  Tensor embedding = l2_normalize_rows(matmul(pooled, enc.head_w) + enc.head_b);
  return {embedding, pooled};
}

Tensor encode_image(const Tensor& input, const Encoder& enc) {
  return encode(input, enc).embedding;
}

Tensor similarity_matrix(const Tensor& img, const ClassTextEmbeddings& txt) {
  if (img.rank() != 2 || img.dim(1) != txt.vectors.dim(1))
    throw ShapeError("similarity: embeddings " + shape_str(img.shape()) +
                     " do not match class vectors " + shape_str(txt.vectors.shape()));
  Tensor cls = l2_normalize_rows(txt.vectors);
  return matmul(img, transpose(cls)) * exp(txt.log_scale);
}

Tensor contrastive_ce(const Tensor& s_pair) {
  if (s_pair.rank() != 2 || s_pair.dim(0) != s_pair.dim(1))
    throw UsageError("contrastive_ce: expected a square pair matrix, got " +
                     shape_str(s_pair.shape()));
  int64_t n = s_pair.dim(0);
  Tensor eye = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) eye.data_mut()[static_cast<size_t>(i * n + i)] = 1.0;
  Tensor diag_sum = sum(mul(s_pair, eye));
  Tensor rows = sum(logsumexp(s_pair, 1));
  Tensor cols = sum(logsumexp(s_pair, 0));
  return (rows + cols - 2.0 * diag_sum) * (0.5 / static_cast<double>(n));
}

Tensor class_ce(const Tensor& s, const std::vector<int>& labels) {
  if (s.rank() != 2 || s.dim(1) != 2)
    throw ShapeError("class_ce: expected scores [n,2], got " + shape_str(s.shape()));
  int64_t n = s.dim(0);
  if (static_cast<int64_t>(labels.size()) != n)
    throw DataError("class_ce: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " score rows");
  Tensor onehot = Tensor::zeros({n, 2});
  for (int64_t i = 0; i < n; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y != 0 && y != 1)
      throw DataError("class_ce: label " + std::to_string(y) + " out of range at row " +
                      std::to_string(i));
    onehot.data_mut()[static_cast<size_t>(i * 2 + y)] = 1.0;
  }
  Tensor picked = sum(mul(s, onehot), {1});
  return mean(logsumexp(s, 1) - picked);
}

}  // namespace moaecr
