/* fissure — crack-identification engine: tensor math with reverse-mode
 * autodiff, seven CNN/ViT architectures, synthetic crack corpora, and the
 * pretrain / scratch / transfer experiment harness.
 *
 * C89-compatible surface over the C++ core. Every function returns an
 * fsr_status; on failure, fsr_last_error() describes what went wrong
 * (thread-local, valid until the next failing call on that thread).
 * Handles are opaque and freed with their matching *_close function.
 */

#ifndef FISSURE_H
#define FISSURE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FSR_BUILD_SHARED)
#define FSR_API __declspec(dllexport)
#else
#define FSR_API __declspec(dllimport)
#endif
#else
#define FSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fsr_status {
  FSR_OK = 0,
  FSR_ERROR_ARGUMENT = 1, /* null handle, bad enum string, contract violation */
  FSR_ERROR_CONFIG = 2,   /* config parse/validation failure (CLI exits 2)    */
  FSR_ERROR_IO = 3,       /* filesystem or decode problem                     */
  FSR_ERROR_RUNTIME = 4   /* anything else that went wrong at run time        */
} fsr_status;

FSR_API const char* fsr_version(void);
FSR_API const char* fsr_status_name(fsr_status status);
FSR_API const char* fsr_last_error(void);
FSR_API void fsr_string_free(char* s);

/* --- run configuration ------------------------------------------------ */

typedef struct fsr_config fsr_config;

/* Loads a JSON run document; relative paths resolve against its directory. */
FSR_API fsr_status fsr_config_open(const char* path, fsr_config** out);
/* Parses JSON text; relative paths resolve against base_dir (may be "."). */
FSR_API fsr_status fsr_config_parse(const char* json_text, const char* base_dir, fsr_config** out);
/* Applies one "dotted.key=value" override, then revalidates. */
FSR_API fsr_status fsr_config_set(fsr_config* cfg, const char* assignment);
/* Returns the fully resolved document; free with fsr_string_free. */
FSR_API fsr_status fsr_config_dump(const fsr_config* cfg, char** out_json);
FSR_API void fsr_config_close(fsr_config* cfg);

/* --- whole-run drivers (what the CLI calls) ----------------------------- */

/* Materializes configured synthetic corpora to their roots (PNG + manifest). */
FSR_API fsr_status fsr_generate(const fsr_config* cfg);
/* Validates rooted dataset directories and writes their manifests. */
FSR_API fsr_status fsr_ingest(const fsr_config* cfg);
/* Runs one experiment mode: "pretrain", "scratch", "transfer",
 * "transfer_merge", "transfer_finetune", "compare", or NULL for the
 * config's mode. On success *out_run_dir (optional) holds the run
 * directory; free with fsr_string_free. jobs <= 1 is fully serial. */
FSR_API fsr_status fsr_run(const fsr_config* cfg, const char* mode, int jobs, char** out_run_dir);
/* Re-emits pivot files from <run_dir>/records.csv, byte-identically. */
FSR_API fsr_status fsr_report(const char* run_dir);

/* --- datasets ----------------------------------------------------------- */

typedef struct fsr_dataset fsr_dataset;

/* family: "concrete", "soil" or "rock". Deterministic in (family, side, seed). */
FSR_API fsr_status fsr_dataset_generate(const char* family, int n_per_class, int side,
                                        uint64_t seed, fsr_dataset** out);
/* Reads ROOT/cracked and ROOT/uncracked PNG directories. */
FSR_API fsr_status fsr_dataset_open(const char* root, int side, fsr_dataset** out);
FSR_API fsr_status fsr_dataset_save(const fsr_dataset* ds, const char* root);
FSR_API int64_t fsr_dataset_count(const fsr_dataset* ds);
/* label: 1 = cracked, 0 = uncracked. */
FSR_API int64_t fsr_dataset_class_count(const fsr_dataset* ds, int label);
FSR_API int32_t fsr_dataset_side(const fsr_dataset* ds);
FSR_API void fsr_dataset_close(fsr_dataset* ds);

/* --- models -------------------------------------------------------------- */

typedef struct fsr_model fsr_model;

/* kind: "lenet5", "alexnet", "inception_a_lenet", "inception_e_lenet",
 * "resnet18", "mobilenet_v1", "vit"; scale: "full" or "desk". */
FSR_API fsr_status fsr_model_build(const char* kind, const char* scale, int num_classes,
                                   uint64_t seed, fsr_model** out);
FSR_API fsr_status fsr_model_save(const fsr_model* model, const char* path);
FSR_API fsr_status fsr_model_load(fsr_model* model, const char* path);
FSR_API int64_t fsr_model_parameter_count(const fsr_model* model);
FSR_API int32_t fsr_model_input_side(const fsr_model* model);
/* pixels: n images, planar [n][3][side][side], values in [0,1]; side must
 * equal fsr_model_input_side. out_labels receives n predictions. */
FSR_API fsr_status fsr_model_classify(const fsr_model* model, const double* pixels, int32_t n,
                                      int32_t side, int32_t* out_labels);
FSR_API void fsr_model_close(fsr_model* model);

#ifdef __cplusplus
}
#endif

#endif /* FISSURE_H */
