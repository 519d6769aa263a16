#ifndef MOAECR_H
#define MOAECR_H

/* C interface to the MoAE-CR library.
 *
 * All entry points return a moaecr_status; on any non-OK status a
 * human-readable message is available from moaecr_last_error() until the
 * next call on the same thread. Output parameters are written only on
 * MOAECR_OK unless a function documents otherwise. Objects returned through
 * out-parameters are owned by the caller and released with the matching
 * _free function. NULL is never a valid handle argument.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status values match the CLI exit codes. */
typedef enum moaecr_status {
  MOAECR_OK = 0,
  MOAECR_ERR_CONFIG = 1,  /* bad arguments, config text, or input files */
  MOAECR_ERR_NUMERIC = 2, /* training aborted on a non-finite loss */
  MOAECR_ERR_CHECK = 3    /* a verification suite reported failures */
} moaecr_status;

/* Opaque run configuration (model, loss, optimizer, data sections). */
typedef struct moaecr_config moaecr_config;

/* Opaque text payload (JSON, CSV, or plain-text report). */
typedef struct moaecr_result moaecr_result;

/* Library version, "major.minor.patch". Never NULL. */
const char* moaecr_version(void);

/* Message from the most recent failing call on this thread; "" when the
 * most recent call succeeded. Never NULL. */
const char* moaecr_last_error(void);

/* --- configuration ------------------------------------------------- */

/* Builds a named preset: "desk" (default training recipe) or "paper"
 * (published optimizer settings). */
moaecr_status moaecr_config_preset(const char* name, moaecr_config** out);

/* Applies flat sectioned key=value text over the current values. Partial
 * files are fine; unknown sections or keys fail. */
moaecr_status moaecr_config_apply_text(moaecr_config* cfg, const char* text);
moaecr_status moaecr_config_apply_file(moaecr_config* cfg, const char* path);

/* Single-key override, equivalent to a one-line config file. */
moaecr_status moaecr_config_set(moaecr_config* cfg, const char* section,
                                const char* key, const char* value);

/* Canonical full rendering of the config as config-file text. */
moaecr_status moaecr_config_render(const moaecr_config* cfg,
                                   moaecr_result** out);

/* Semantic validation (enum values, dimension cross-checks). */
moaecr_status moaecr_config_validate(const moaecr_config* cfg);

void moaecr_config_free(moaecr_config* cfg);

/* --- results ------------------------------------------------------- */

/* NUL-terminated payload text; valid until moaecr_result_free. */
const char* moaecr_result_text(const moaecr_result* res);
size_t moaecr_result_size(const moaecr_result* res);
void moaecr_result_free(moaecr_result* res);

/* --- pipeline ------------------------------------------------------ */

/* Trains per the config. When checkpoint_path is non-NULL the trained
 * parameters are saved there; when record_json is non-NULL the run record
 * (config snapshot, loss history, final evaluation) is returned as JSON. */
moaecr_status moaecr_train(const moaecr_config* cfg,
                           const char* checkpoint_path,
                           moaecr_result** record_json);

/* Loads a checkpoint, rebuilds the config's data and splits, and scores
 * the test split at the dev-set threshold. Returns the evaluation report
 * as JSON ({"acer": ..., "acc": ..., "auc": ..., "eer": ...,
 * "threshold": ...}, percent values). */
moaecr_status moaecr_evaluate(const moaecr_config* cfg,
                              const char* checkpoint_path,
                              moaecr_result** report_json);

/* Runs an ablation grid derived from the config: "components" sweeps
 * {vanilla, single-head soft-MoE, MoAE} x {dm on/off} x {cdm on/off};
 * "experts" sweeps expert count and head count over {2,4,8}x{2,4,8}.
 * Each cell trains `repeats` times on consecutive seeds; per-seed run
 * records are written under out_dir. threads <= 0 reads MOAECR_THREADS
 * (default 1). Failed cells are marked in the table and the sweep
 * continues. Returns the summary table as CSV. */
moaecr_status moaecr_ablate(const moaecr_config* cfg, const char* grid,
                            int repeats, const char* out_dir, int threads,
                            moaecr_result** table_csv);

/* Generates the config's synthetic dataset, splits it per the config's
 * protocol, and writes train.csv / dev.csv / test.csv under out_dir.
 * Returns a JSON summary with per-split row counts. */
moaecr_status moaecr_generate_data(const moaecr_config* cfg,
                                   const char* out_dir,
                                   moaecr_result** summary_json);

/* Writes pooled encoder features of one split ("train", "dev", "test") as
 * CSV (feature columns, label, attack_type) to out_csv_path. Parameters
 * come from checkpoint_path when non-NULL, otherwise from a freshly
 * initialized model (the config's seed). */
moaecr_status moaecr_export_embeddings(const moaecr_config* cfg,
                                       const char* checkpoint_path,
                                       const char* split,
                                       const char* out_csv_path);

/* Projects an embedding CSV to 2D by deterministic PCA and writes the
 * projected CSV and an SVG scatter (colored by label and by attack type).
 * Either output path may be NULL to skip it. When summary_json is
 * non-NULL, returns {"variance": [v1, v2]} for the two components. */
moaecr_status moaecr_project(const char* embeddings_csv_path,
                             const char* out_csv_path,
                             const char* out_svg_path,
                             moaecr_result** summary_json);

/* Runs the registered gradient checks (cases_per_op seeded cases for every
 * differentiable op and loss) and returns the report text. Returns
 * MOAECR_OK when every op passes, MOAECR_ERR_CHECK otherwise; the report
 * is produced in both cases. fault_op is a test fixture: a non-empty name
 * corrupts that op's analytic derivative to exercise failure paths. */
moaecr_status moaecr_gradcheck(int cases_per_op, const char* fault_op,
                               moaecr_result** report_text);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MOAECR_H */
