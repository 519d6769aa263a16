#pragma once

#include <string>
#include <vector>

#include "trainer.hpp"

namespace moaecr {

struct AblationCell {
  std::string name;  // filesystem-safe row identifier
  RunConfig config;
};

struct CellStats {
  std::string name;
  int seeds_run = 0;
  int seeds_failed = 0;
  std::string error;  // first failure message, empty when clean
  double mean_acer = 0, std_acer = 0;
  double mean_acc = 0, std_acc = 0;
  double mean_auc = 0, std_auc = 0;
  double mean_eer = 0, std_eer = 0;
};

struct AblationResult {
  std::vector<CellStats> cells;
  bool any_failed = false;
};

// Component rows: sublayer {none, softmoe, moae} x dm x cdm toggles.
std::vector<AblationCell> component_grid(const RunConfig& base);

// Capacity rows: experts x heads, full loss stack.
std::vector<AblationCell> expert_grid(const RunConfig& base,
                                      const std::vector<int>& experts,
                                      const std::vector<int>& heads);

// Each cell trains `repeats` times with seeds base+0..base+repeats-1 so rows
// are paired. Per-seed RunRecords land in out_dir as <cell>_seed<k>.json,
// written atomically. threads <= 0 reads MOAECR_THREADS (default 1). Failed
// runs mark the cell but the sweep continues.
AblationResult run_ablation(const std::vector<AblationCell>& cells,
                            int repeats, const std::string& out_dir,
                            int threads = 0);

// Deterministic summary table, one row per cell.
std::string ablation_csv(const AblationResult& result);

}  // namespace moaecr
