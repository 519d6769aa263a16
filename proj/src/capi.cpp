#include "moaecr.h"

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>

#include "ablate.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "datasynth.hpp"
#include "errors.hpp"
#include "gradreg.hpp"
#include "project.hpp"
#include "trainer.hpp"

struct moaecr_config {
  moaecr::RunConfig cfg;
};

struct moaecr_result {
  std::string text;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
moaecr_status wrap(F&& body) {
  try {
    body();
    g_last_error.clear();
    return MOAECR_OK;
  } catch (const moaecr::Error& e) {
    g_last_error = e.what();
    return static_cast<moaecr_status>(e.code);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MOAECR_ERR_CONFIG;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) {
    throw moaecr::ConfigError(std::string("null argument: ") + name);
  }
}

moaecr_result* make_result(std::string text) {
  return new moaecr_result{std::move(text)};
}

const moaecr::Dataset& split_by_name(const moaecr::Splits& splits,
                                     const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "dev") return splits.dev;
  if (name == "test") return splits.test;
  throw moaecr::ConfigError("unknown split '" + name +
                            "' (expected train, dev, or test)");
}

moaecr::Model model_for(const moaecr::RunConfig& cfg,
                        const char* checkpoint_path) {
  moaecr::Model model = moaecr::Model::init(cfg.model, cfg.optim.seed);
  if (checkpoint_path != nullptr) {
    moaecr::Checkpoint ckpt = moaecr::load_checkpoint(checkpoint_path);
    moaecr::load_into(ckpt, model.parameters());
  }
  return model;
}

}  // namespace

extern "C" {

const char* moaecr_version(void) { return "1.0.0"; }

const char* moaecr_last_error(void) { return g_last_error.c_str(); }

moaecr_status moaecr_config_preset(const char* name, moaecr_config** out) {
  return wrap([&] {
    require(name, "name");
    require(out, "out");
    *out = new moaecr_config{moaecr::preset_by_name(name)};
  });
}

moaecr_status moaecr_config_apply_text(moaecr_config* cfg, const char* text) {
  return wrap([&] {
    require(cfg, "cfg");
    require(text, "text");
    cfg->cfg = moaecr::parse_config_text(text, cfg->cfg);
  });
}

moaecr_status moaecr_config_apply_file(moaecr_config* cfg, const char* path) {
  return wrap([&] {
    require(cfg, "cfg");
    require(path, "path");
    cfg->cfg = moaecr::load_config_file(path, cfg->cfg);
  });
}

moaecr_status moaecr_config_set(moaecr_config* cfg, const char* section,
                                const char* key, const char* value) {
  return wrap([&] {
    require(cfg, "cfg");
    require(section, "section");
    require(key, "key");
    require(value, "value");
    const std::string text = std::string("[") + section + "]\n" + key +
                             " = " + value + "\n";
    cfg->cfg = moaecr::parse_config_text(text, cfg->cfg);
  });
}

moaecr_status moaecr_config_render(const moaecr_config* cfg,
                                   moaecr_result** out) {
  return wrap([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = make_result(moaecr::serialize_config(cfg->cfg));
  });
}

moaecr_status moaecr_config_validate(const moaecr_config* cfg) {
  return wrap([&] {
    require(cfg, "cfg");
    cfg->cfg.validate();
  });
}

void moaecr_config_free(moaecr_config* cfg) { delete cfg; }

const char* moaecr_result_text(const moaecr_result* res) {
  return res == nullptr ? "" : res->text.c_str();
}

size_t moaecr_result_size(const moaecr_result* res) {
  return res == nullptr ? 0 : res->text.size();
}

void moaecr_result_free(moaecr_result* res) { delete res; }

moaecr_status moaecr_train(const moaecr_config* cfg,
                           const char* checkpoint_path,
                           moaecr_result** record_json) {
  return wrap([&] {
    require(cfg, "cfg");
    moaecr::TrainResult res = moaecr::train_run(cfg->cfg);
    if (checkpoint_path != nullptr) {
      moaecr::save_checkpoint(checkpoint_path,
                              moaecr::serialize_config(cfg->cfg),
                              res.model.parameters());
    }
    if (record_json != nullptr) {
      *record_json = make_result(res.record.to_json());
    }
  });
}

moaecr_status moaecr_evaluate(const moaecr_config* cfg,
                              const char* checkpoint_path,
                              moaecr_result** report_json) {
  return wrap([&] {
    require(cfg, "cfg");
    require(checkpoint_path, "checkpoint_path");
    require(report_json, "report_json");
    moaecr::Model model = model_for(cfg->cfg, checkpoint_path);
    moaecr::Dataset ds = moaecr::generate(cfg->cfg.data.synth);
    moaecr::Splits splits = moaecr::make_splits(cfg->cfg, ds);
    moaecr::EvalReport report =
        moaecr::evaluate_model(model, splits.dev, splits.test);
    *report_json = make_result(report.to_json());
  });
}

moaecr_status moaecr_ablate(const moaecr_config* cfg, const char* grid,
                            int repeats, const char* out_dir, int threads,
                            moaecr_result** table_csv) {
  return wrap([&] {
    require(cfg, "cfg");
    require(grid, "grid");
    require(out_dir, "out_dir");
    require(table_csv, "table_csv");
    const std::string kind = grid;
    std::vector<moaecr::AblationCell> cells;
    if (kind == "components") {
      cells = moaecr::component_grid(cfg->cfg);
    } else if (kind == "experts") {
      cells = moaecr::expert_grid(cfg->cfg, {2, 4, 8}, {2, 4, 8});
    } else {
      throw moaecr::ConfigError("unknown grid '" + kind +
                                "' (expected components or experts)");
    }
    moaecr::AblationResult result =
        moaecr::run_ablation(cells, repeats, out_dir, threads);
    *table_csv = make_result(moaecr::ablation_csv(result));
  });
}

moaecr_status moaecr_generate_data(const moaecr_config* cfg,
                                   const char* out_dir,
                                   moaecr_result** summary_json) {
  return wrap([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    moaecr::Dataset ds = moaecr::generate(cfg->cfg.data.synth);
    moaecr::Splits splits = moaecr::make_splits(cfg->cfg, ds);
    std::filesystem::create_directories(out_dir);
    const std::string base = std::string(out_dir) + "/";
    moaecr::export_csv(splits.train, base + "train.csv");
    moaecr::export_csv(splits.dev, base + "dev.csv");
    moaecr::export_csv(splits.test, base + "test.csv");
    if (summary_json != nullptr) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "{\"train\": %zu, \"dev\": %zu, \"test\": %zu}",
                    splits.train.samples.size(), splits.dev.samples.size(),
                    splits.test.samples.size());
      *summary_json = make_result(buf);
    }
  });
}

moaecr_status moaecr_export_embeddings(const moaecr_config* cfg,
                                       const char* checkpoint_path,
                                       const char* split,
                                       const char* out_csv_path) {
  return wrap([&] {
    require(cfg, "cfg");
    require(split, "split");
    require(out_csv_path, "out_csv_path");
    moaecr::Model model = model_for(cfg->cfg, checkpoint_path);
    moaecr::Dataset ds = moaecr::generate(cfg->cfg.data.synth);
    moaecr::Splits splits = moaecr::make_splits(cfg->cfg, ds);
    moaecr::Dataset emb =
        moaecr::embedding_dataset(model, split_by_name(splits, split));
    moaecr::export_csv(emb, out_csv_path);
  });
}

moaecr_status moaecr_project(const char* embeddings_csv_path,
                             const char* out_csv_path,
                             const char* out_svg_path,
                             moaecr_result** summary_json) {
  return wrap([&] {
    require(embeddings_csv_path, "embeddings_csv_path");
    moaecr::Dataset emb = moaecr::import_csv(embeddings_csv_path);
    moaecr::Projection proj = moaecr::project2d(emb);
    if (out_csv_path != nullptr) {
      moaecr::write_projection_csv(out_csv_path, proj, emb);
    }
    if (out_svg_path != nullptr) {
      moaecr::write_projection_svg(out_svg_path, proj, emb);
    }
    if (summary_json != nullptr) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "{\"variance\": [%.17g, %.17g]}",
                    proj.variance[0], proj.variance[1]);
      *summary_json = make_result(buf);
    }
  });
}

moaecr_status moaecr_gradcheck(int cases_per_op, const char* fault_op,
                               moaecr_result** report_text) {
  bool all_pass = false;
  const moaecr_status st = wrap([&] {
    require(report_text, "report_text");
    moaecr::GradSuiteReport report = moaecr::run_gradcheck_suite(
        cases_per_op, fault_op == nullptr ? "" : fault_op);
    all_pass = report.all_pass;
    *report_text = make_result(report.to_text());
  });
  if (st != MOAECR_OK) return st;
  if (!all_pass) {
    g_last_error = "gradient check reported failures";
    return MOAECR_ERR_CHECK;
  }
  return MOAECR_OK;
}

}  // extern "C"
