#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace moaecr {

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<int> to_int_labels(const std::vector<int64_t>& labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int64_t l : labels) out.push_back(static_cast<int>(l));
  return out;
}

std::string bundle_str(const LossBundle& b) {
  std::ostringstream os;
  os << "total=" << fmt_double(b.l_total) << " ce=" << fmt_double(b.l_ce)
     << " dm=" << fmt_double(b.l_dm) << " att=" << fmt_double(b.l_att)
     << " rep=" << fmt_double(b.l_rep) << " cdm=" << fmt_double(b.l_cdm);
  return os.str();
}

Tensor baseline_loss(const std::string& name, const Tensor& embedding,
                     const std::vector<int>& labels) {
  if (name == "triplet") return triplet_loss(embedding, labels);
  if (name == "hard_triplet") return hard_triplet_loss(embedding, labels);
  if (name == "npair") return npair_loss(embedding, labels);
  if (name == "supcon") return supcon_loss(embedding, labels);
  throw ConfigError("unknown baseline loss '" + name + "'");
}

}  // namespace

Model Model::init(const EncoderConfig& cfg, uint64_t seed) {
  SeededRng rng(seed);
  Model m{Encoder::init(cfg, rng),
          ClassTextEmbeddings::init(cfg.embed_dim, rng)};
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() const {
  auto params = encoder.parameters();
  for (auto& p : prompts.parameters()) params.push_back(std::move(p));
  return params;
}

Adam::Adam(std::vector<Tensor> params, double lr, double weight_decay)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
  for (Tensor& p : params_) {
    p.zero_grad();  // allocate now so unused parameters update uniformly
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto value = params_[k].data_mut();
    const auto grad = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] + weight_decay_ * value[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

Splits make_splits(const RunConfig& cfg, const Dataset& ds) {
  if (cfg.data.protocol == "loto") {
    return leave_one_type_out(ds, cfg.data.held_type);
  }
  return intra_splits(ds);
}

ScoredSet score_split(const Model& model, const Dataset& split) {
  NoGradGuard guard;
  Tensor x = payload_tensor(split, all_indices(split));
  EncodeResult enc = encode(x, model.encoder);
  Tensor s = similarity_matrix(enc.embedding, model.prompts);
  ScoredSet out;
  const int64_t n = s.dim(0);
  for (int64_t i = 0; i < n; ++i) {
    out.scores.push_back(s.at({i, 0}) - s.at({i, 1}));
    out.labels.push_back(split.samples[static_cast<size_t>(i)].label);
  }
  return out;
}

EvalReport evaluate_model(const Model& model, const Dataset& dev,
                          const Dataset& test) {
  return acer_at(score_split(model, dev), score_split(model, test));
}

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  Dataset ds = generate(cfg.data.synth);
  Splits splits = make_splits(cfg, ds);
  Model model = Model::init(cfg.model, cfg.optim.seed);

  std::vector<Tensor> opt_params;
  for (auto& [name, p] : model.parameters()) opt_params.push_back(p);
  Adam adam(opt_params, cfg.optim.lr, cfg.optim.weight_decay);

  RunRecord record;
  record.config_text = serialize_config(cfg);

  LossBundle last_finite;
  bool have_finite = false;
  std::vector<std::vector<int64_t>> batches;
  size_t batch_pos = 0;
  uint64_t epoch = 0;

  for (int64_t it = 0; it < cfg.optim.iterations; ++it) {
    if (batch_pos >= batches.size()) {
      batches = balanced_batches(
          splits.train, cfg.optim.batch_size,
          cfg.optim.seed ^ ((epoch + 1) * 0x9E3779B97F4A7C15ull));
      batch_pos = 0;
      ++epoch;
    }
    const std::vector<int64_t>& batch = batches[batch_pos++];

    Tensor x = payload_tensor(splits.train, batch);
    const std::vector<int> labels =
        to_int_labels(label_vector(splits.train, batch));

    EncodeResult enc = encode(x, model.encoder);
    Tensor l_ce;
    if (cfg.loss.baseline == "none") {
      Tensor s = similarity_matrix(enc.embedding, model.prompts);
      l_ce = class_ce(s, labels);
    } else {
      l_ce = baseline_loss(cfg.loss.baseline, enc.embedding, labels);
    }

    Tensor l_dm = Tensor::scalar(0.0);
    Tensor l_att = Tensor::scalar(0.0);
    Tensor l_rep = Tensor::scalar(0.0);
    if (cfg.loss.dm || cfg.loss.cdm) {
      ClassCenters centers = class_centers(enc.pooled, labels);
      if (cfg.loss.dm) {
        l_dm = dm_loss(center_relation(centers, cfg.loss.t));
      }
      if (cfg.loss.cdm) {
        l_att = attraction_loss(enc.pooled, centers, labels);
        l_rep = repulsion_loss(enc.pooled, centers, labels);
      }
    }
    Tensor l_cdm = l_att + l_rep;
    Tensor l_total = total_loss(l_ce, l_dm, l_cdm);

    LossBundle bundle;
    bundle.l_ce = l_ce.item();
    bundle.l_dm = l_dm.item();
    bundle.l_att = l_att.item();
    bundle.l_rep = l_rep.item();
    bundle.l_cdm = l_cdm.item();
    bundle.l_total = l_total.item();
    if (!bundle.all_finite()) {
      throw NumericError(
          "loss became non-finite at iteration " + std::to_string(it) +
          (have_finite ? "; last finite bundle: " + bundle_str(last_finite)
                       : "; no finite iterations completed"));
    }
    last_finite = bundle;
    have_finite = true;
    record.history.push_back(bundle);

    backward(l_total);
    adam.step();
    adam.zero_grad();
  }

  record.final_eval = evaluate_model(model, splits.dev, splits.test);
  record.wall_clock_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(record), std::move(model), std::move(ds),
          std::move(splits)};
}

std::string RunRecord::to_json() const {
  std::ostringstream os;
  os << "{\n  \"config\": \"" << json_escape(config_text) << "\",\n";
  os << "  \"iterations\": " << history.size() << ",\n";
  os << "  \"history\": [";
  for (size_t i = 0; i < history.size(); ++i) {
    const LossBundle& b = history[i];
    os << (i == 0 ? "\n" : ",\n");
    os << "    {\"ce\": " << fmt_double(b.l_ce)
       << ", \"dm\": " << fmt_double(b.l_dm)
       << ", \"att\": " << fmt_double(b.l_att)
       << ", \"rep\": " << fmt_double(b.l_rep)
       << ", \"cdm\": " << fmt_double(b.l_cdm)
       << ", \"total\": " << fmt_double(b.l_total) << "}";
  }
  os << (history.empty() ? "],\n" : "\n  ],\n");
  os << "  \"eval\": " << final_eval.to_json() << ",\n";
  os << "  \"wall_clock_ms\": " << fmt_double(wall_clock_ms) << "\n}\n";
  return os.str();
}

Dataset embedding_dataset(const Model& model, const Dataset& split) {
  NoGradGuard guard;
  Tensor x = payload_tensor(split, all_indices(split));
  EncodeResult enc = encode(x, model.encoder);
  Dataset out;
  out.spec = split.spec;
  out.spec.image_mode = false;
  out.spec.dims = enc.pooled.dim(1);
  const auto values = enc.pooled.data();
  const int64_t d = enc.pooled.dim(1);
  for (size_t i = 0; i < split.samples.size(); ++i) {
    Sample s;
    s.payload.assign(values.begin() + static_cast<int64_t>(i) * d,
                     values.begin() + static_cast<int64_t>(i + 1) * d);
    s.label = split.samples[i].label;
    s.attack_type = split.samples[i].attack_type;
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace moaecr
