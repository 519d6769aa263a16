#include "datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace moaecr {

namespace {

int64_t image_grid(int64_t dims) {
  int64_t g = 1;
  while (g * g < dims) ++g;
  return g;
}

// Feature j fills one square cell with a checker texture scaled by its
// value, giving the patch encoder per-cell structure to work with.
std::vector<double> render_image(const std::vector<double>& f, int64_t dims,
                                 int64_t side) {
  const int64_t grid = image_grid(dims);
  const int64_t cell = side / grid;
  std::vector<double> img(static_cast<size_t>(side * side), 0.0);
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      const int64_t j = (r / cell) * grid + (c / cell);
      if (j < dims) {
        const double texture = 0.8 + 0.4 * static_cast<double>((r + c) & 1);
        img[static_cast<size_t>(r * side + c)] =
            f[static_cast<size_t>(j)] * texture;
      }
    }
  }
  return img;
}

std::vector<int64_t> shuffled_indices(const std::vector<int64_t>& v,
                                      SeededRng& rng) {
  std::vector<int64_t> out = v;
  rng.shuffle(out);
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<int64_t>& idx) {
  Dataset out;
  out.spec = ds.spec;
  out.samples.reserve(idx.size());
  for (int64_t i : idx) out.samples.push_back(ds.samples[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (attack_types.size() < 2) {
    throw ConfigError("need at least 2 attack types, got " +
                      std::to_string(attack_types.size()));
  }
  if (dims < 1) throw ConfigError("dims must be positive");
  if (live_spread <= 0.0) throw ConfigError("live_spread must be > 0");
  if (gap <= 0.0) throw ConfigError("gap must be > 0");
  if (n_live < 1 || n_per_type < 1) {
    throw ConfigError("n_live and n_per_type must be positive");
  }
  for (size_t t = 0; t < attack_types.size(); ++t) {
    const AttackTypeSpec& a = attack_types[t];
    if (a.spread <= 0.0) {
      throw ConfigError("attack type " + std::to_string(t + 1) +
                        " spread must be > 0");
    }
    if (a.offset.empty() || a.offset.size() > static_cast<size_t>(dims)) {
      throw ConfigError("attack type " + std::to_string(t + 1) +
                        " offset must have 1.." + std::to_string(dims) +
                        " entries");
    }
  }
  if (image_mode) {
    const int64_t grid = image_grid(dims);
    if (image_side < grid || image_side % grid != 0) {
      throw ConfigError("image_side must be a positive multiple of " +
                        std::to_string(grid));
    }
  }
}

std::vector<AttackTypeSpec> default_attack_types(int k, double spread,
                                                 double rare_distance,
                                                 double rare_spread) {
  if (k < 2) throw ConfigError("need at least 2 attack types");
  std::vector<AttackTypeSpec> types;
  const int common = k - 1;
  for (int j = 0; j < common; ++j) {
    const double theta = common == 1
                             ? 0.0
                             : 1.5707963267948966 * static_cast<double>(j) /
                                   static_cast<double>(common - 1);
    AttackTypeSpec t;
    t.offset = {std::cos(theta), std::sin(theta), 0.0};
    t.spread = spread;
    types.push_back(t);
  }
  AttackTypeSpec rare;
  rare.offset = {0.0, 0.0, rare_distance};
  rare.spread = rare_spread;
  types.push_back(rare);
  return types;
}

std::vector<AttackTypeSpec> default_attack_types(int k, double spread,
                                                 double rare_distance) {
  return default_attack_types(k, spread, rare_distance, spread);
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.dims = 16;
  spec.attack_types = default_attack_types(4, 2.25);
  spec.live_spread = 1.0;
  spec.gap = 3.5;
  spec.n_live = 600;
  spec.n_per_type = 150;
  spec.seed = 1;
  return spec;
}

int64_t Dataset::payload_width() const {
  return spec.image_mode ? spec.image_side * spec.image_side : spec.dims;
}

std::vector<int64_t> Dataset::indices_of_type(int attack_type) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].attack_type == attack_type) {
      out.push_back(static_cast<int64_t>(i));
    }
  }
  return out;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  Dataset ds;
  ds.spec = spec;

  auto emit = [&](const std::vector<double>& center, double spread, int label,
                  int attack_type, int64_t count) {
    for (int64_t i = 0; i < count; ++i) {
      std::vector<double> f(static_cast<size_t>(spec.dims));
      for (int64_t d = 0; d < spec.dims; ++d) {
        f[static_cast<size_t>(d)] =
            center[static_cast<size_t>(d)] + spread * rng.normal();
      }
      Sample s;
      s.payload = spec.image_mode
                      ? render_image(f, spec.dims, spec.image_side)
                      : std::move(f);
      s.label = label;
      s.attack_type = attack_type;
      ds.samples.push_back(std::move(s));
    }
  };

  const std::vector<double> origin(static_cast<size_t>(spec.dims), 0.0);
  emit(origin, spec.live_spread, 0, 0, spec.n_live);
  for (int t = 0; t < spec.k(); ++t) {
    const AttackTypeSpec& a = spec.attack_types[static_cast<size_t>(t)];
    std::vector<double> center(static_cast<size_t>(spec.dims), 0.0);
    for (size_t d = 0; d < a.offset.size(); ++d) {
      center[d] = spec.gap * a.offset[d];
    }
    emit(center, a.spread, 1, t + 1, spec.n_per_type);
  }
  return ds;
}

Splits intra_splits(const Dataset& ds) {
  SeededRng rng(ds.spec.seed * 0x9E3779B9ull + 1);
  std::vector<int64_t> train_idx, dev_idx, test_idx;
  for (int t = 0; t <= ds.spec.k(); ++t) {
    std::vector<int64_t> idx = shuffled_indices(ds.indices_of_type(t), rng);
    const size_t n = idx.size();
    const size_t n_test = n * 3 / 10;
    const size_t n_dev = (n - n_test) / 10;
    for (size_t i = 0; i < n; ++i) {
      if (i < n_test) {
        test_idx.push_back(idx[i]);
      } else if (i < n_test + n_dev) {
        dev_idx.push_back(idx[i]);
      } else {
        train_idx.push_back(idx[i]);
      }
    }
  }
  return {subset(ds, train_idx), subset(ds, dev_idx), subset(ds, test_idx)};
}

Splits leave_one_type_out(const Dataset& ds, int held_type) {
  if (held_type < 1 || held_type > ds.spec.k()) {
    throw ConfigError("held_type must be in 1.." + std::to_string(ds.spec.k()) +
                      ", got " + std::to_string(held_type));
  }
  SeededRng rng(ds.spec.seed * 0x9E3779B9ull + 1000 +
                static_cast<uint64_t>(held_type));

  std::vector<int64_t> test_idx = ds.indices_of_type(held_type);
  std::vector<int64_t> lives = shuffled_indices(ds.indices_of_type(0), rng);
  const size_t n_test_live = lives.size() * 3 / 10;
  std::vector<int64_t> pool_live(lives.begin() + static_cast<int64_t>(n_test_live),
                                 lives.end());
  test_idx.insert(test_idx.end(), lives.begin(),
                  lives.begin() + static_cast<int64_t>(n_test_live));

  std::vector<int64_t> pool_fake;
  for (int t = 1; t <= ds.spec.k(); ++t) {
    if (t == held_type) continue;
    for (int64_t i : ds.indices_of_type(t)) pool_fake.push_back(i);
  }
  pool_fake = shuffled_indices(pool_fake, rng);

  std::vector<int64_t> train_idx, dev_idx;
  auto split_pool = [&](const std::vector<int64_t>& pool) {
    const size_t n_dev = pool.size() / 10;
    for (size_t i = 0; i < pool.size(); ++i) {
      (i < n_dev ? dev_idx : train_idx).push_back(pool[i]);
    }
  };
  split_pool(pool_live);
  split_pool(pool_fake);
  return {subset(ds, train_idx), subset(ds, dev_idx), subset(ds, test_idx)};
}

std::vector<std::vector<int64_t>> balanced_batches(const Dataset& split,
                                                   int64_t batch_size,
                                                   uint64_t seed) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and >= 2, got " +
                      std::to_string(batch_size));
  }
  std::vector<int64_t> lives, fakes;
  for (size_t i = 0; i < split.samples.size(); ++i) {
    (split.samples[i].label == 0 ? lives : fakes)
        .push_back(static_cast<int64_t>(i));
  }
  if (lives.empty() || fakes.empty()) {
    throw DataError("balanced batches need both classes (live=" +
                    std::to_string(lives.size()) + ", fake=" +
                    std::to_string(fakes.size()) + ")");
  }
  SeededRng rng(seed);
  rng.shuffle(lives);
  rng.shuffle(fakes);

  const int64_t n = static_cast<int64_t>(split.samples.size());
  const int64_t n_batches = (n + batch_size - 1) / batch_size;

  // Reserve one live and one fake per batch (cycling only when a class has
  // fewer samples than batches), then deal the leftovers; the final slots
  // pad by cycling through the leftover pool.
  std::vector<std::vector<int64_t>> batches(static_cast<size_t>(n_batches));
  for (int64_t b = 0; b < n_batches; ++b) {
    batches[static_cast<size_t>(b)].push_back(
        lives[static_cast<size_t>(b) % lives.size()]);
    batches[static_cast<size_t>(b)].push_back(
        fakes[static_cast<size_t>(b) % fakes.size()]);
  }
  std::vector<int64_t> pool;
  for (size_t i = static_cast<size_t>(n_batches); i < lives.size(); ++i) {
    pool.push_back(lives[i]);
  }
  for (size_t i = static_cast<size_t>(n_batches); i < fakes.size(); ++i) {
    pool.push_back(fakes[i]);
  }
  if (pool.empty()) {  // tiny split: pad by cycling the whole split instead
    pool = lives;
    pool.insert(pool.end(), fakes.begin(), fakes.end());
  }
  rng.shuffle(pool);

  size_t next = 0;
  for (auto& batch : batches) {
    while (static_cast<int64_t>(batch.size()) < batch_size && !pool.empty()) {
      batch.push_back(pool[next % pool.size()]);
      ++next;
    }
  }
  return batches;
}

Tensor payload_tensor(const Dataset& ds, const std::vector<int64_t>& idx) {
  const int64_t w = ds.payload_width();
  const int64_t n = static_cast<int64_t>(idx.size());
  Shape shape = ds.spec.image_mode
                    ? Shape{n, 1, ds.spec.image_side, ds.spec.image_side}
                    : Shape{n, w};
  Tensor out = Tensor::zeros(shape);
  auto dst = out.data_mut();
  for (int64_t i = 0; i < n; ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    if (static_cast<int64_t>(s.payload.size()) != w) {
      throw DataError("sample payload width " +
                      std::to_string(s.payload.size()) + " does not match " +
                      std::to_string(w));
    }
    std::copy(s.payload.begin(), s.payload.end(), dst.begin() + i * w);
  }
  return out;
}

std::vector<int64_t> label_vector(const Dataset& ds,
                                  const std::vector<int64_t>& idx) {
  std::vector<int64_t> out;
  out.reserve(idx.size());
  for (int64_t i : idx) {
    out.push_back(ds.samples[static_cast<size_t>(i)].label);
  }
  return out;
}

std::vector<int64_t> all_indices(const Dataset& ds) {
  std::vector<int64_t> out(ds.samples.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int64_t>(i);
  return out;
}

void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path + " for writing");
  const int64_t w = ds.payload_width();
  for (int64_t j = 0; j < w; ++j) f << "f" << j << ",";
  f << "label,attack_type\n";
  char buf[64];
  for (const Sample& s : ds.samples) {
    for (double v : s.payload) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      f << buf << ",";
    }
    f << s.label << "," << s.attack_type << "\n";
  }
  if (!f.good()) throw DataError("write to " + path + " failed");
}

Dataset import_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError(path + " is empty");

  int64_t width = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    if (cols.size() < 3 || cols[cols.size() - 2] != "label" ||
        cols.back() != "attack_type") {
      throw DataError(path + ": expected header f0,...,label,attack_type");
    }
    width = static_cast<int64_t>(cols.size()) - 2;
  }

  Dataset ds;
  int max_type = 1;
  size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Sample s;
    for (int64_t j = 0; j < width; ++j) {
      if (!std::getline(ss, cell, ',')) {
        throw DataError(path + " row " + std::to_string(row) + ": short row");
      }
      s.payload.push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (!std::getline(ss, cell, ',')) {
      throw DataError(path + " row " + std::to_string(row) + ": missing label");
    }
    s.label = std::atoi(cell.c_str());
    if (!std::getline(ss, cell, ',')) {
      throw DataError(path + " row " + std::to_string(row) +
                      ": missing attack_type");
    }
    s.attack_type = std::atoi(cell.c_str());
    if ((s.label == 1) != (s.attack_type >= 1) ||
        (s.label != 0 && s.label != 1)) {
      throw DataError(path + " row " + std::to_string(row) +
                      ": label/attack_type mismatch");
    }
    max_type = std::max(max_type, s.attack_type);
    ds.samples.push_back(std::move(s));
  }
  ds.spec.dims = width;
  ds.spec.image_mode = false;
  ds.spec.attack_types = default_attack_types(std::max(2, max_type));
  return ds;
}

}  // namespace moaecr
