#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "moaecr.h"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset = "desk";
  long long seed = 0;
  bool seed_set = false;
  std::string protocol;
  int held_type = 0;
  bool held_set = false;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (key=value text)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "base preset")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "optimizer seed override")
      ->each([&](const std::string&) { o.seed_set = true; });
  cmd->add_option("--protocol", o.protocol, "evaluation protocol")
      ->check(CLI::IsMember({"intra", "loto"}));
  cmd->add_option("--held-type", o.held_type, "held-out attack type (loto)")
      ->each([&](const std::string&) { o.held_set = true; });
  cmd->add_option("--out", o.out_dir, "output directory")
      ->capture_default_str();
}

int fail(moaecr_status st) {
  std::fprintf(stderr, "error: %s\n", moaecr_last_error());
  return static_cast<int>(st);
}

// Preset, then file, then flag overrides; flags win.
moaecr_status build_config(const CommonOpts& o, moaecr_config** out) {
  moaecr_status st = moaecr_config_preset(o.preset.c_str(), out);
  if (st != MOAECR_OK) return st;
  if (!o.config_path.empty()) {
    st = moaecr_config_apply_file(*out, o.config_path.c_str());
    if (st != MOAECR_OK) return st;
  }
  if (o.seed_set) {
    st = moaecr_config_set(*out, "optim", "seed",
                           std::to_string(o.seed).c_str());
    if (st != MOAECR_OK) return st;
  }
  if (!o.protocol.empty()) {
    st = moaecr_config_set(*out, "data", "protocol", o.protocol.c_str());
    if (st != MOAECR_OK) return st;
  }
  if (o.held_set) {
    st = moaecr_config_set(*out, "data", "held_type",
                           std::to_string(o.held_type).c_str());
    if (st != MOAECR_OK) return st;
  }
  return moaecr_config_validate(*out);
}

bool write_file(const std::string& path, const char* text) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) return false;
  outf << text;
  return outf.good();
}

struct Config {
  moaecr_config* ptr = nullptr;
  ~Config() { moaecr_config_free(ptr); }
};

struct Result {
  moaecr_result* ptr = nullptr;
  ~Result() { moaecr_result_free(ptr); }
  const char* text() const { return moaecr_result_text(ptr); }
};

int run_train(const CommonOpts& o) {
  Config cfg;
  moaecr_status st = build_config(o, &cfg.ptr);
  if (st != MOAECR_OK) return fail(st);
  std::filesystem::create_directories(o.out_dir);
  const std::string ckpt = o.out_dir + "/model.ckpt";
  Result record;
  st = moaecr_train(cfg.ptr, ckpt.c_str(), &record.ptr);
  if (st != MOAECR_OK) return fail(st);
  const std::string record_path = o.out_dir + "/record.json";
  Result resolved;
  if (moaecr_config_render(cfg.ptr, &resolved.ptr) != MOAECR_OK ||
      !write_file(record_path, record.text()) ||
      !write_file(o.out_dir + "/config.txt", resolved.text())) {
    std::fprintf(stderr, "error: cannot write artifacts under %s\n",
                 o.out_dir.c_str());
    return 1;
  }
  std::printf("wrote %s and %s\n", record_path.c_str(), ckpt.c_str());
  return 0;
}

int run_evaluate(const CommonOpts& o, const std::string& ckpt) {
  Config cfg;
  moaecr_status st = build_config(o, &cfg.ptr);
  if (st != MOAECR_OK) return fail(st);
  Result report;
  st = moaecr_evaluate(cfg.ptr, ckpt.c_str(), &report.ptr);
  if (st != MOAECR_OK) return fail(st);
  std::printf("%s\n", report.text());
  return 0;
}

int run_ablate(const CommonOpts& o, const std::string& grid, int repeats,
               int threads) {
  Config cfg;
  moaecr_status st = build_config(o, &cfg.ptr);
  if (st != MOAECR_OK) return fail(st);
  Result table;
  st = moaecr_ablate(cfg.ptr, grid.c_str(), repeats, o.out_dir.c_str(),
                     threads, &table.ptr);
  if (st != MOAECR_OK) return fail(st);
  if (!write_file(o.out_dir + "/table.csv", table.text())) {
    std::fprintf(stderr, "error: cannot write %s/table.csv\n",
                 o.out_dir.c_str());
    return 1;
  }
  std::printf("%s", table.text());
  return 0;
}

int run_generate(const CommonOpts& o) {
  Config cfg;
  moaecr_status st = build_config(o, &cfg.ptr);
  if (st != MOAECR_OK) return fail(st);
  Result summary;
  st = moaecr_generate_data(cfg.ptr, o.out_dir.c_str(), &summary.ptr);
  if (st != MOAECR_OK) return fail(st);
  std::printf("%s\n", summary.text());
  return 0;
}

int run_export(const CommonOpts& o, const std::string& ckpt,
               const std::string& split) {
  Config cfg;
  moaecr_status st = build_config(o, &cfg.ptr);
  if (st != MOAECR_OK) return fail(st);
  std::filesystem::create_directories(o.out_dir);
  const std::string path = o.out_dir + "/embeddings.csv";
  st = moaecr_export_embeddings(cfg.ptr, ckpt.empty() ? nullptr : ckpt.c_str(),
                                split.c_str(), path.c_str());
  if (st != MOAECR_OK) return fail(st);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int run_project(const std::string& input, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const std::string csv = out_dir + "/projection.csv";
  const std::string svg = out_dir + "/projection.svg";
  Result summary;
  moaecr_status st =
      moaecr_project(input.c_str(), csv.c_str(), svg.c_str(), &summary.ptr);
  if (st != MOAECR_OK) return fail(st);
  std::printf("%s\nwrote %s and %s\n", summary.text(), csv.c_str(),
              svg.c_str());
  return 0;
}

int run_gradcheck(int cases, const std::string& fault) {
  Result report;
  const moaecr_status st = moaecr_gradcheck(
      cases, fault.empty() ? nullptr : fault.c_str(), &report.ptr);
  if (st != MOAECR_OK && report.ptr == nullptr) return fail(st);
  std::printf("%s", report.text());
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoAE-CR: soft mixture-of-experts attention with "
               "class-regularization losses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", moaecr_version());
  app.failure_message(CLI::FailureMessage::help);

  CommonOpts train_o, eval_o, ablate_o, gen_o, export_o;
  std::string eval_ckpt, export_ckpt, export_split = "test";
  std::string grid = "components", project_in, project_out = "out";
  std::string fault_op;
  int repeats = 5, threads = 0, cases = 100;

  CLI::App* train = app.add_subcommand("train", "train and save a model");
  add_common(train, train_o);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score a checkpoint on the test split");
  add_common(evaluate, eval_o);
  evaluate->add_option("--checkpoint", eval_ckpt, "trained model file")
      ->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation grid");
  add_common(ablate, ablate_o);
  ablate->add_option("--grid", grid, "components | experts")
      ->check(CLI::IsMember({"components", "experts"}))
      ->capture_default_str();
  ablate->add_option("--repeats", repeats, "seeds per cell")
      ->capture_default_str();
  ablate->add_option("--threads", threads,
                     "parallel cells (0 = MOAECR_THREADS, default 1)");

  CLI::App* generate =
      app.add_subcommand("generate-data", "write the synthetic splits as CSV");
  add_common(generate, gen_o);

  CLI::App* exp = app.add_subcommand("export-embeddings",
                                     "write pooled features of a split");
  add_common(exp, export_o);
  exp->add_option("--checkpoint", export_ckpt,
                  "trained model file (omit for the initialized model)");
  exp->add_option("--split", export_split, "train | dev | test")
      ->check(CLI::IsMember({"train", "dev", "test"}))
      ->capture_default_str();

  CLI::App* project =
      app.add_subcommand("project", "2D PCA of an embedding CSV");
  project->add_option("input", project_in, "embedding CSV")
      ->required()
      ->check(CLI::ExistingFile);
  project->add_option("--out", project_out, "output directory")
      ->capture_default_str();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--cases", cases, "seeded cases per op")
      ->capture_default_str();
  gradcheck->add_option("--fault", fault_op,
                        "corrupt this op's backward rule (test fixture)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (train->parsed()) return run_train(train_o);
  if (evaluate->parsed()) return run_evaluate(eval_o, eval_ckpt);
  if (ablate->parsed()) return run_ablate(ablate_o, grid, repeats, threads);
  if (generate->parsed()) return run_generate(gen_o);
  if (exp->parsed()) return run_export(export_o, export_ckpt, export_split);
  if (project->parsed()) return run_project(project_in, project_out);
  if (gradcheck->parsed()) return run_gradcheck(cases, fault_op);
  return 1;
}
