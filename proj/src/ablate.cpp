#include "ablate.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace moaecr {

namespace {

struct MetricDraws {
  std::vector<double> acer, acc, auc, eer;
};

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("MOAECR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp);
    out << content;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " into place");
  }
}

std::string fmt4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Metrics are aggregated at the stored-record precision so the table is
// exactly recomputable from the per-seed JSON files.
double round4(double v) { return std::strtod(fmt4(v).c_str(), nullptr); }

}  // namespace

std::vector<AblationCell> component_grid(const RunConfig& base) {
  std::vector<AblationCell> cells;
  const struct {
    const char* tag;
    Sublayer sub;
  } subs[] = {{"ce", Sublayer::none},
              {"softmoe", Sublayer::softmoe},
              {"moae", Sublayer::moae}};
  for (const auto& s : subs) {
    for (int dm = 0; dm <= 1; ++dm) {
      for (int cdm = 0; cdm <= 1; ++cdm) {
        AblationCell cell;
        cell.config = base;
        cell.config.model.sublayer = s.sub;
        if (s.sub == Sublayer::softmoe) {
          // Token routing without attention requires a single head.
          cell.config.model.moae.h = 1;
        }
        cell.config.loss.dm = dm != 0;
        cell.config.loss.cdm = cdm != 0;
        cell.name = std::string(s.tag) + (dm ? "_dm" : "") +
                    (cdm ? "_cdm" : "");
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::vector<AblationCell> expert_grid(const RunConfig& base,
                                      const std::vector<int>& experts,
                                      const std::vector<int>& heads) {
  if (experts.empty() || heads.empty()) {
    throw ConfigError("expert grid needs at least one experts and heads value");
  }
  std::vector<AblationCell> cells;
  for (int m : experts) {
    for (int h : heads) {
      AblationCell cell;
      cell.config = base;
      cell.config.model.sublayer = Sublayer::moae;
      cell.config.model.moae.m = m;
      cell.config.model.moae.h = h;
      cell.name = "m" + std::to_string(m) + "_h" + std::to_string(h);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

AblationResult run_ablation(const std::vector<AblationCell>& cells,
                            int repeats, const std::string& out_dir,
                            int threads) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  std::filesystem::create_directories(out_dir);

  struct Task {
    size_t cell;
    int rep;
  };
  std::vector<Task> tasks;
  for (size_t c = 0; c < cells.size(); ++c) {
    for (int r = 0; r < repeats; ++r) tasks.push_back({c, r});
  }

  std::vector<MetricDraws> draws(cells.size());
  std::vector<int> failures(cells.size(), 0);
  std::vector<std::string> errors(cells.size());
  std::mutex sink;
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task task = tasks[t];
      RunConfig cfg = cells[task.cell].config;
      cfg.optim.seed = cfg.optim.seed + static_cast<uint64_t>(task.rep);
      const std::string record_path = out_dir + "/" + cells[task.cell].name +
                                      "_seed" + std::to_string(task.rep) +
                                      ".json";
      try {
        TrainResult res = train_run(cfg);
        write_atomic(record_path, res.record.to_json());
        std::lock_guard<std::mutex> lock(sink);
        draws[task.cell].acer.push_back(round4(res.record.final_eval.acer));
        draws[task.cell].acc.push_back(round4(res.record.final_eval.acc));
        draws[task.cell].auc.push_back(round4(res.record.final_eval.auc));
        draws[task.cell].eer.push_back(round4(res.record.final_eval.eer));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(sink);
        ++failures[task.cell];
        if (errors[task.cell].empty()) errors[task.cell] = e.what();
      }
    }
  };

  const int n_threads = resolve_threads(threads);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  AblationResult result;
  for (size_t c = 0; c < cells.size(); ++c) {
    CellStats stats;
    stats.name = cells[c].name;
    stats.seeds_run = static_cast<int>(draws[c].acer.size());
    stats.seeds_failed = failures[c];
    stats.error = errors[c];
    mean_std(draws[c].acer, stats.mean_acer, stats.std_acer);
    mean_std(draws[c].acc, stats.mean_acc, stats.std_acc);
    mean_std(draws[c].auc, stats.mean_auc, stats.std_auc);
    mean_std(draws[c].eer, stats.mean_eer, stats.std_eer);
    result.any_failed = result.any_failed || failures[c] > 0;
    result.cells.push_back(std::move(stats));
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out =
      "cell,seeds,failed,acer_mean,acer_std,acc_mean,acc_std,auc_mean,"
      "auc_std,eer_mean,eer_std,error\n";
  for (const CellStats& c : result.cells) {
    out += c.name + "," + std::to_string(c.seeds_run) + "," +
           std::to_string(c.seeds_failed) + "," + fmt4(c.mean_acer) + "," +
           fmt4(c.std_acer) + "," + fmt4(c.mean_acc) + "," + fmt4(c.std_acc) +
           "," + fmt4(c.mean_auc) + "," + fmt4(c.std_auc) + "," +
           fmt4(c.mean_eer) + "," + fmt4(c.std_eer) + ",";
    std::string err = c.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    out += err + "\n";
  }
  return out;
}

}  // namespace moaecr
