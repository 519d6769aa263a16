#pragma once

#include <string>
#include <utility>
#include <vector>

#include "moae.hpp"

namespace moaecr {

// Two input front-ends share the transformer trunk: square images are cut
// into patches; flat feature vectors (feature_dim > 0) are chunked into
// feature_dim/token_width tokens.
struct EncoderConfig {
  int64_t image_side = 16;
  int64_t patch_side = 4;
  int64_t channels = 1;
  int64_t feature_dim = 0;
  int64_t token_width = 0;
  int64_t d = 32;
  int blocks = 2;
  int64_t mlp_hidden = 0;  // 0 picks 2*d
  MoAEConfig moae;         // also supplies the block attention head count
  Sublayer sublayer = Sublayer::moae;
  int64_t embed_dim = 16;

  void validate() const;
  bool feature_mode() const { return feature_dim > 0; }
  int64_t patch_dim() const {
    return feature_mode() ? token_width : channels * patch_side * patch_side;
  }
  int64_t tokens() const;  // includes the class token
};

struct Encoder {
  EncoderConfig cfg;
  Tensor patch_embed;  // [patch_dim, d]
  Tensor patch_bias;   // [d]
  Tensor cls_token;    // [1,1,d]
  Tensor positions;    // [1,p,d]
  std::vector<Block> blocks;
  Tensor head_w;  // [d, embed_dim]
  Tensor head_b;  // [embed_dim]

  static Encoder init(const EncoderConfig& cfg, SeededRng& rng);
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

struct ClassTextEmbeddings {
  Tensor vectors;    // [2, embed_dim]; row 0 = live, row 1 = fake
  Tensor log_scale;  // scalar; logit scale exp(log_scale) stays positive

  static ClassTextEmbeddings init(int64_t embed_dim, SeededRng& rng);
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

// [n,c,H,W] -> [n, (H/ps)*(W/ps), c*ps*ps]; pure data movement
Tensor patchify(const Tensor& images, int64_t patch_side);

struct EncodeResult {
  Tensor embedding;  // [n, embed_dim], rows L2-normalized
  Tensor pooled;     // [n, d] class-token state before the head; feeds DM/CDM
};

// input: [n,c,H,W] in image mode or [n,feature_dim] in feature mode
EncodeResult encode(const Tensor& input, const Encoder& enc);
Tensor encode_image(const Tensor& input, const Encoder& enc);

// S[i,j] = exp(log_scale) * <img_i, normalize(class_j)>
Tensor similarity_matrix(const Tensor& img, const ClassTextEmbeddings& txt);

// Symmetric contrastive cross-entropy over a unique-pair square matrix:
// diagonal entries are the positive pairs.
Tensor contrastive_ce(const Tensor& s_pair);

// Mean cross-entropy of softmax(S) rows against labels {0,1}; the training
// classification term.
Tensor class_ce(const Tensor& s, const std::vector<int>& labels);

}  // namespace moaecr
