#include "project.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rng.hpp"

namespace moaecr {

namespace {

constexpr double kTol = 1e-10;
constexpr int kMaxIter = 100000;

// Largest eigenpair of the symmetric matrix c (row-major d x d).
std::pair<double, std::vector<double>> power_top(
    const std::vector<double>& c, int64_t d, SeededRng& rng) {
  std::vector<double> v(static_cast<size_t>(d));
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  std::vector<double> w(static_cast<size_t>(d));
  double lambda = 0.0;
  for (int it = 0; it < kMaxIter; ++it) {
    for (int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        acc += c[static_cast<size_t>(i * d + j)] * v[static_cast<size_t>(j)];
      }
      w[static_cast<size_t>(i)] = acc;
    }
    double wn = 0.0;
    for (double x : w) wn += x * x;
    wn = std::sqrt(wn);
    if (wn < 1e-300) return {0.0, v};  // null space; keep the current basis
    lambda = 0.0;  // Rayleigh quotient v.(Cv) with unit v
    for (int64_t i = 0; i < d; ++i) {
      lambda += v[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
    }
    double vdiff = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double nv = w[static_cast<size_t>(i)] / wn;
      vdiff = std::max(vdiff, std::abs(nv - v[static_cast<size_t>(i)]));
      v[static_cast<size_t>(i)] = nv;
    }
    if (vdiff <= kTol && it > 0) break;
  }

  // Sign convention: largest-magnitude coordinate is positive.
  size_t peak = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[peak])) peak = i;
  }
  if (v[peak] < 0.0) {
    for (double& x : v) x = -x;
  }
  return {lambda, v};
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* label_color(int label) {
  return label == 0 ? "#2b8a3e" : "#c92a2a";
}

const char* type_color(int attack_type) {
  static const char* palette[] = {"#2b8a3e", "#c92a2a", "#1971c2",
                                  "#e8590c", "#9c36b5", "#0b7285",
                                  "#5f3dc4", "#868e96"};
  return palette[static_cast<size_t>(attack_type) %
                 (sizeof palette / sizeof palette[0])];
}

struct Panel {
  double x0, y0;  // top-left corner in page coordinates
  double lo_x, span_x, lo_y, span_y;
  double side;

  double px(double x) const { return x0 + (x - lo_x) / span_x * side; }
  // SVG y grows downward; flip so larger values plot higher.
  double py(double y) const { return y0 + side - (y - lo_y) / span_y * side; }
};

}  // namespace

Projection project2d(const Dataset& emb) {
  const int64_t n = static_cast<int64_t>(emb.samples.size());
  if (n < 2) throw ConfigError("projection needs at least 2 samples");
  const int64_t d = emb.payload_width();

  Projection proj;
  proj.mean.assign(static_cast<size_t>(d), 0.0);
  for (const Sample& s : emb.samples) {
    for (int64_t j = 0; j < d; ++j) {
      proj.mean[static_cast<size_t>(j)] += s.payload[static_cast<size_t>(j)];
    }
  }
  for (double& m : proj.mean) m /= static_cast<double>(n);

  // Covariance with 1/(n-1); d is the pooled width, so d x d stays small.
  std::vector<double> c(static_cast<size_t>(d * d), 0.0);
  for (const Sample& s : emb.samples) {
    for (int64_t i = 0; i < d; ++i) {
      const double di =
          s.payload[static_cast<size_t>(i)] - proj.mean[static_cast<size_t>(i)];
      for (int64_t j = i; j < d; ++j) {
        const double dj = s.payload[static_cast<size_t>(j)] -
                          proj.mean[static_cast<size_t>(j)];
        c[static_cast<size_t>(i * d + j)] += di * dj;
      }
    }
  }
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = i; j < d; ++j) {
      const double v = c[static_cast<size_t>(i * d + j)] /
                       static_cast<double>(n - 1);
      c[static_cast<size_t>(i * d + j)] = v;
      c[static_cast<size_t>(j * d + i)] = v;
    }
  }

  SeededRng rng(424243);
  for (int comp = 0; comp < 2; ++comp) {
    auto [lambda, v] = power_top(c, d, rng);
    if (comp == 1) {
      // Deflation leaves a trace of the first axis; re-orthonormalize so
      // the pair is a rigid basis.
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        dot += v[static_cast<size_t>(j)] * proj.axes[0][static_cast<size_t>(j)];
      }
      double norm = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        v[static_cast<size_t>(j)] -=
            dot * proj.axes[0][static_cast<size_t>(j)];
        norm += v[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
      }
      norm = std::sqrt(norm);
      if (norm > 1e-300) {
        for (double& x : v) x /= norm;
      }
      size_t peak = 0;
      for (size_t i = 1; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[peak])) peak = i;
      }
      if (v[peak] < 0.0) {
        for (double& x : v) x = -x;
      }
    }
    proj.variance[comp] = lambda;
    proj.axes.push_back(v);
    // Deflate so the next pass finds the second component.
    for (int64_t i = 0; i < d; ++i) {
      for (int64_t j = 0; j < d; ++j) {
        c[static_cast<size_t>(i * d + j)] -= lambda *
                                             v[static_cast<size_t>(i)] *
                                             v[static_cast<size_t>(j)];
      }
    }
  }

  proj.xs.reserve(static_cast<size_t>(n));
  proj.ys.reserve(static_cast<size_t>(n));
  for (const Sample& s : emb.samples) {
    double x = 0.0, y = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double centered =
          s.payload[static_cast<size_t>(j)] - proj.mean[static_cast<size_t>(j)];
      x += centered * proj.axes[0][static_cast<size_t>(j)];
      y += centered * proj.axes[1][static_cast<size_t>(j)];
    }
    proj.xs.push_back(x);
    proj.ys.push_back(y);
  }
  return proj;
}

void write_projection_csv(const std::string& path, const Projection& proj,
                          const Dataset& emb) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp);
    out << "x,y,label,attack_type\n";
    for (size_t i = 0; i < emb.samples.size(); ++i) {
      out << fmt(proj.xs[i]) << "," << fmt(proj.ys[i]) << ","
          << emb.samples[i].label << "," << emb.samples[i].attack_type << "\n";
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " into place");
  }
}

void write_projection_svg(const std::string& path, const Projection& proj,
                          const Dataset& emb) {
  constexpr double side = 360.0, margin = 40.0, gap = 60.0;
  const double width = margin * 2 + side * 2 + gap;
  const double height = margin * 2 + side + 20.0;

  double lo_x = proj.xs.empty() ? 0.0 : proj.xs[0];
  double hi_x = lo_x, lo_y = proj.ys.empty() ? 0.0 : proj.ys[0], hi_y = lo_y;
  for (double v : proj.xs) {
    lo_x = std::min(lo_x, v);
    hi_x = std::max(hi_x, v);
  }
  for (double v : proj.ys) {
    lo_y = std::min(lo_y, v);
    hi_y = std::max(hi_y, v);
  }
  const double pad_x = (hi_x - lo_x) * 0.05 + 1e-12;
  const double pad_y = (hi_y - lo_y) * 0.05 + 1e-12;
  lo_x -= pad_x;
  hi_x += pad_x;
  lo_y -= pad_y;
  hi_y += pad_y;
  const double span_x = std::max(hi_x - lo_x, 1e-9);
  const double span_y = std::max(hi_y - lo_y, 1e-9);

  const Panel panels[2] = {
      {margin, margin + 20.0, lo_x, span_x, lo_y, span_y, side},
      {margin + side + gap, margin + 20.0, lo_x, span_x, lo_y, span_y, side},
  };
  const char* titles[2] = {"by label", "by attack type"};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(width)
        << "\" height=\"" << fmt2(height) << "\" viewBox=\"0 0 " << fmt2(width)
        << " " << fmt2(height) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int p = 0; p < 2; ++p) {
      const Panel& pn = panels[p];
      out << "<text x=\"" << fmt2(pn.x0) << "\" y=\"" << fmt2(pn.y0 - 6.0)
          << "\" font-family=\"monospace\" font-size=\"13\">" << titles[p]
          << "</text>\n";
      out << "<rect x=\"" << fmt2(pn.x0) << "\" y=\"" << fmt2(pn.y0)
          << "\" width=\"" << fmt2(side) << "\" height=\"" << fmt2(side)
          << "\" fill=\"none\" stroke=\"#adb5bd\"/>\n";
      for (size_t i = 0; i < emb.samples.size(); ++i) {
        const char* color = p == 0 ? label_color(emb.samples[i].label)
                                   : type_color(emb.samples[i].attack_type);
        out << "<circle cx=\"" << fmt2(pn.px(proj.xs[i])) << "\" cy=\""
            << fmt2(pn.py(proj.ys[i])) << "\" r=\"2.5\" fill=\"" << color
            << "\" fill-opacity=\"0.65\"/>\n";
      }
    }
    out << "</svg>\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " into place");
  }
}

}  // namespace moaecr
