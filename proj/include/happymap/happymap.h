/* happymap - auditor-driven projected-update calibration library.
 *
 * C interface to the shared library. All objects are opaque handles created
 * and destroyed through these functions; every call returns an hm_status and
 * leaves a human-readable message in hm_last_error() on failure. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with hm_string_free().
 */
#ifndef HAPPYMAP_H
#define HAPPYMAP_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hm_status {
    HM_OK = 0,
    HM_ERR_INVALID_ARGUMENT = 1,
    HM_ERR_PARSE = 2,
    HM_ERR_IO = 3,
    HM_ERR_NUMERIC = 4,
    HM_ERR_INTERNAL = 5
} hm_status;

typedef struct hm_dataset hm_dataset;
typedef struct hm_chain hm_chain;

const char* hm_version(void);

/* Message for the most recent failure on this thread; empty string if none. */
const char* hm_last_error(void);

void hm_string_free(char* s);

/* Datasets: CSV with x_* feature columns, optional y label, g_* group
 * columns and a z column tagging rows so/ta. Empty x_ cells mark missing
 * values. */
hm_status hm_dataset_load_csv(const char* path, hm_dataset** out);
hm_status hm_dataset_parse_csv(const char* text, hm_dataset** out);
hm_status hm_dataset_save_csv(const hm_dataset* ds, const char* path);
hm_status hm_dataset_format_csv(const hm_dataset* ds, char** out_text);

/* Row-major features (n*d); labels may be NULL for unlabeled data. */
hm_status hm_dataset_create(const double* features, size_t n, size_t d, const double* labels,
                            hm_dataset** out);

/* Deterministic split: the first (1-tail_fraction) of rows into head, the
 * rest into tail. Either out pointer may be NULL. */
hm_status hm_dataset_split_tail(const hm_dataset* ds, double tail_fraction, hm_dataset** head,
                                hm_dataset** tail);

size_t hm_dataset_rows(const hm_dataset* ds);
size_t hm_dataset_features(const hm_dataset* ds);
size_t hm_dataset_groups(const hm_dataset* ds);
void hm_dataset_free(hm_dataset* ds);

/* Seeded synthetic data. generator_json picks the kind (hetero, shift,
 * missing, groups) and its parameters; the oracle sidecar JSON carries the
 * closed-form ground truth. For the missing generator the uncorrupted copy
 * is returned through out_aux (NULL for the others when not produced). */
hm_status hm_synth(const char* generator_json, hm_dataset** out_data, hm_dataset** out_aux,
                   char** out_oracle_json);

/* Chains: the happymap-chain-v1 JSON format. Round-trips are bit exact. */
hm_status hm_chain_parse(const char* text, hm_chain** out);
hm_status hm_chain_format(const hm_chain* chain, char** out_text);

/* x carries n_features values; fails if the chain references group columns
 * (predict against a dataset row instead). */
hm_status hm_chain_predict(const hm_chain* chain, const double* x, size_t n_features,
                           double* out_value);
hm_status hm_chain_predict_dataset(const hm_chain* chain, const hm_dataset* ds,
                                   double* out_values);
void hm_chain_free(hm_chain* chain);

/* Runs one command: fit, audit, conformal, conformal2, multivalid,
 * shift-conformal, universal-l2, missing, parity or eval. config_json is the
 * command's configuration block (unknown keys are rejected); holdout is an
 * optional evaluation dataset (for the missing command it is the uncorrupted
 * copy). The bundle JSON collects chain/interval, run report (JSON and CSV
 * text), metrics and warnings. */
hm_status hm_run(const char* command, const char* config_json, const hm_dataset* data,
                 const hm_dataset* holdout, char** out_bundle_json);

#ifdef __cplusplus
}
#endif

#endif /* HAPPYMAP_H */
