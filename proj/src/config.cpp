#include "config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace moaecr {

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + " expects true/false, got '" + v + "'");
}

int64_t parse_int(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError(key + " expects an integer, got '" + v + "'");
  }
  return static_cast<int64_t>(x);
}

double parse_real(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError(key + " expects a number, got '" + v + "'");
  }
  return x;
}

Sublayer parse_sublayer(const std::string& v) {
  if (v == "none") return Sublayer::none;
  if (v == "softmoe") return Sublayer::softmoe;
  if (v == "moae") return Sublayer::moae;
  throw ConfigError("sublayer must be none|softmoe|moae, got '" + v + "'");
}

std::string sublayer_name(Sublayer s) {
  switch (s) {
    case Sublayer::none: return "none";
    case Sublayer::softmoe: return "softmoe";
    case Sublayer::moae: return "moae";
  }
  return "none";
}

// The generator's per-type layout is derived from three scalar knobs; the
// parser rebuilds attack_types from them so files stay flat.
struct SynthKnobs {
  int attack_types = 4;
  double fake_spread = 2.25;
  double rare_distance = 1.8;
  double rare_spread = 2.25;
};

SynthKnobs knobs_of(const SyntheticSpec& s) {
  SynthKnobs k;
  k.attack_types = s.k();
  if (!s.attack_types.empty()) {
    k.fake_spread = s.attack_types.front().spread;
    k.rare_spread = s.attack_types.back().spread;
    const auto& rare = s.attack_types.back().offset;
    k.rare_distance = rare.empty() ? 1.8 : rare.back();
  }
  return k;
}

}  // namespace

void LossConfig::validate() const {
  if (t < 0.0) throw ConfigError("loss.t must be >= 0");
  if (baseline != "none" && baseline != "triplet" &&
      baseline != "hard_triplet" && baseline != "npair" &&
      baseline != "supcon") {
    throw ConfigError(
        "loss.baseline must be none|triplet|hard_triplet|npair|supcon, got '" +
        baseline + "'");
  }
}

void OptimConfig::validate() const {
  if (algorithm != "adam") {
    throw ConfigError("optim.algorithm must be adam, got '" + algorithm + "'");
  }
  if (lr <= 0.0) throw ConfigError("optim.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (iterations < 0) throw ConfigError("optim.iterations must be >= 0");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("optim.batch_size must be even and >= 2");
  }
}

void DataConfig::validate() const {
  synth.validate();
  if (protocol != "intra" && protocol != "loto") {
    throw ConfigError("data.protocol must be intra|loto, got '" + protocol +
                      "'");
  }
  if (protocol == "loto" && (held_type < 1 || held_type > synth.k())) {
    throw ConfigError("data.held_type must be in 1.." +
                      std::to_string(synth.k()));
  }
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  optim.validate();
  data.validate();
  if (data.synth.image_mode) {
    if (model.feature_mode()) {
      throw ConfigError("image-mode data needs an image-mode model");
    }
    if (model.image_side != data.synth.image_side || model.channels != 1) {
      throw ConfigError("model image geometry does not match the dataset");
    }
  } else {
    if (!model.feature_mode()) {
      throw ConfigError("feature-mode data needs model.feature_dim > 0");
    }
    if (model.feature_dim != data.synth.dims) {
      throw ConfigError("model.feature_dim " +
                        std::to_string(model.feature_dim) +
                        " does not match data dims " +
                        std::to_string(data.synth.dims));
    }
  }
}

RunConfig desk_preset() {
  RunConfig cfg;
  cfg.model.feature_dim = 16;
  cfg.model.token_width = 4;
  cfg.model.d = 32;
  cfg.model.blocks = 2;
  cfg.model.embed_dim = 16;
  cfg.model.moae.d = 32;
  cfg.model.moae.h = 2;
  cfg.model.moae.m = 4;
  cfg.model.moae.s = 1;
  cfg.model.sublayer = Sublayer::moae;
  return cfg;
}

RunConfig paper_preset() {
  RunConfig cfg = desk_preset();
  cfg.optim.lr = 1e-6;
  cfg.optim.weight_decay = 5e-4;
  cfg.optim.iterations = 300;
  return cfg;
}

RunConfig preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("preset must be desk|paper, got '" + name + "'");
}

RunConfig parse_config_text(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  SynthKnobs knobs = knobs_of(cfg.data.synth);

  std::istringstream in(text);
  std::string line, section;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "loss" && section != "optim" &&
          section != "data") {
        throw ConfigError("unknown section [" + section + "]");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("key '" + key + "' appears before any [section]");
    }
    const std::string qual = section + "." + key;

    if (section == "model") {
      if (key == "d") {
        cfg.model.d = parse_int(value, qual);
        cfg.model.moae.d = cfg.model.d;
      } else if (key == "blocks") {
        cfg.model.blocks = static_cast<int>(parse_int(value, qual));
      } else if (key == "heads") {
        cfg.model.moae.h = static_cast<int>(parse_int(value, qual));
      } else if (key == "experts") {
        cfg.model.moae.m = static_cast<int>(parse_int(value, qual));
      } else if (key == "slots") {
        cfg.model.moae.s = static_cast<int>(parse_int(value, qual));
      } else if (key == "expert_hidden") {
        cfg.model.moae.expert_hidden = parse_int(value, qual);
      } else if (key == "mlp_hidden") {
        cfg.model.mlp_hidden = parse_int(value, qual);
      } else if (key == "sublayer") {
        cfg.model.sublayer = parse_sublayer(value);
      } else if (key == "embed_dim") {
        cfg.model.embed_dim = parse_int(value, qual);
      } else if (key == "feature_dim") {
        cfg.model.feature_dim = parse_int(value, qual);
      } else if (key == "token_width") {
        cfg.model.token_width = parse_int(value, qual);
      } else if (key == "image_side") {
        cfg.model.image_side = parse_int(value, qual);
      } else if (key == "patch_side") {
        cfg.model.patch_side = parse_int(value, qual);
      } else if (key == "channels") {
        cfg.model.channels = parse_int(value, qual);
      } else {
        throw ConfigError("unknown key '" + qual + "'");
      }
    } else if (section == "loss") {
      if (key == "dm") {
        cfg.loss.dm = parse_bool(value, qual);
      } else if (key == "cdm") {
        cfg.loss.cdm = parse_bool(value, qual);
      } else if (key == "t") {
        cfg.loss.t = parse_real(value, qual);
      } else if (key == "baseline") {
        cfg.loss.baseline = value;
      } else {
        throw ConfigError("unknown key '" + qual + "'");
      }
    } else if (section == "optim") {
      if (key == "algorithm") {
        cfg.optim.algorithm = value;
      } else if (key == "lr") {
        cfg.optim.lr = parse_real(value, qual);
      } else if (key == "weight_decay") {
        cfg.optim.weight_decay = parse_real(value, qual);
      } else if (key == "iterations") {
        cfg.optim.iterations = parse_int(value, qual);
      } else if (key == "batch_size") {
        cfg.optim.batch_size = parse_int(value, qual);
      } else if (key == "seed") {
        cfg.optim.seed = static_cast<uint64_t>(parse_int(value, qual));
      } else {
        throw ConfigError("unknown key '" + qual + "'");
      }
    } else {  // data
      if (key == "dims") {
        cfg.data.synth.dims = parse_int(value, qual);
      } else if (key == "attack_types") {
        knobs.attack_types = static_cast<int>(parse_int(value, qual));
      } else if (key == "fake_spread") {
        knobs.fake_spread = parse_real(value, qual);
      } else if (key == "rare_distance") {
        knobs.rare_distance = parse_real(value, qual);
      } else if (key == "rare_spread") {
        knobs.rare_spread = parse_real(value, qual);
      } else if (key == "live_spread") {
        cfg.data.synth.live_spread = parse_real(value, qual);
      } else if (key == "gap") {
        cfg.data.synth.gap = parse_real(value, qual);
      } else if (key == "n_live") {
        cfg.data.synth.n_live = parse_int(value, qual);
      } else if (key == "n_per_type") {
        cfg.data.synth.n_per_type = parse_int(value, qual);
      } else if (key == "data_seed") {
        cfg.data.synth.seed = static_cast<uint64_t>(parse_int(value, qual));
      } else if (key == "image_data") {
        cfg.data.synth.image_mode = parse_bool(value, qual);
      } else if (key == "image_side") {
        cfg.data.synth.image_side = parse_int(value, qual);
      } else if (key == "protocol") {
        cfg.data.protocol = value;
      } else if (key == "held_type") {
        cfg.data.held_type = static_cast<int>(parse_int(value, qual));
      } else {
        throw ConfigError("unknown key '" + qual + "'");
      }
    }
  }
  cfg.data.synth.attack_types =
      default_attack_types(knobs.attack_types, knobs.fake_spread,
                           knobs.rare_distance, knobs.rare_spread);
  return cfg;
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), base);
}

std::string serialize_config(const RunConfig& cfg) {
  const SynthKnobs knobs = knobs_of(cfg.data.synth);
  std::ostringstream out;
  out << "[model]\n";
  out << "d = " << cfg.model.d << "\n";
  out << "blocks = " << cfg.model.blocks << "\n";
  out << "heads = " << cfg.model.moae.h << "\n";
  out << "experts = " << cfg.model.moae.m << "\n";
  out << "slots = " << cfg.model.moae.s << "\n";
  out << "expert_hidden = " << cfg.model.moae.expert_hidden << "\n";
  out << "mlp_hidden = " << cfg.model.mlp_hidden << "\n";
  out << "sublayer = " << sublayer_name(cfg.model.sublayer) << "\n";
  out << "embed_dim = " << cfg.model.embed_dim << "\n";
  out << "feature_dim = " << cfg.model.feature_dim << "\n";
  out << "token_width = " << cfg.model.token_width << "\n";
  out << "image_side = " << cfg.model.image_side << "\n";
  out << "patch_side = " << cfg.model.patch_side << "\n";
  out << "channels = " << cfg.model.channels << "\n";
  out << "\n[loss]\n";
  out << "dm = " << (cfg.loss.dm ? "true" : "false") << "\n";
  out << "cdm = " << (cfg.loss.cdm ? "true" : "false") << "\n";
  out << "t = " << fmt_double(cfg.loss.t) << "\n";
  out << "baseline = " << cfg.loss.baseline << "\n";
  out << "\n[optim]\n";
  out << "algorithm = " << cfg.optim.algorithm << "\n";
  out << "lr = " << fmt_double(cfg.optim.lr) << "\n";
  out << "weight_decay = " << fmt_double(cfg.optim.weight_decay) << "\n";
  out << "iterations = " << cfg.optim.iterations << "\n";
  out << "batch_size = " << cfg.optim.batch_size << "\n";
  out << "seed = " << cfg.optim.seed << "\n";
  out << "\n[data]\n";
  out << "dims = " << cfg.data.synth.dims << "\n";
  out << "attack_types = " << knobs.attack_types << "\n";
  out << "live_spread = " << fmt_double(cfg.data.synth.live_spread) << "\n";
  out << "fake_spread = " << fmt_double(knobs.fake_spread) << "\n";
  out << "rare_distance = " << fmt_double(knobs.rare_distance) << "\n";
  out << "rare_spread = " << fmt_double(knobs.rare_spread) << "\n";
  out << "gap = " << fmt_double(cfg.data.synth.gap) << "\n";
  out << "n_live = " << cfg.data.synth.n_live << "\n";
  out << "n_per_type = " << cfg.data.synth.n_per_type << "\n";
  out << "data_seed = " << cfg.data.synth.seed << "\n";
  out << "image_data = " << (cfg.data.synth.image_mode ? "true" : "false")
      << "\n";
  out << "image_side = " << cfg.data.synth.image_side << "\n";
  out << "protocol = " << cfg.data.protocol << "\n";
  out << "held_type = " << cfg.data.held_type << "\n";
  return out.str();
}

}  // namespace moaecr
