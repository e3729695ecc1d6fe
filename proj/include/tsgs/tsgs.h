#ifndef TSGS_H
#define TSGS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define TSGS_API __declspec(dllexport)
#else
#  define TSGS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsgs_status {
  TSGS_OK = 0,
  TSGS_ERR_PARAMETER = 1,  /* bad argument */
  TSGS_ERR_CONTRACT = 2,   /* broken precondition */
  TSGS_ERR_CONFIG = 3,     /* unknown, repeated or conflicting configuration */
  TSGS_ERR_LOAD = 4,       /* dataset validation failure */
  TSGS_ERR_CORRUPT = 5,    /* malformed file */
  TSGS_ERR_NUMERICAL = 6,  /* non-finite loss during training */
  TSGS_ERR_IO = 7,
  TSGS_ERR_INTERNAL = 8
} tsgs_status;

typedef enum tsgs_channel {
  TSGS_CHANNEL_COLOR = 0,      /* 3 values per pixel, linear RGB */
  TSGS_CHANNEL_ID = 1,         /* 16 values per pixel */
  TSGS_CHANNEL_DEPTH_SOFT = 2, /* 1 value per pixel */
  TSGS_CHANNEL_DEPTH_HARD = 3,
  TSGS_CHANNEL_ALPHA = 4
} tsgs_channel;

typedef enum tsgs_split { TSGS_SPLIT_TRAIN = 0, TSGS_SPLIT_HOLDOUT = 1 } tsgs_split;

typedef struct tsgs_dataset tsgs_dataset;
typedef struct tsgs_model tsgs_model;
typedef struct tsgs_train_config tsgs_train_config;

/* Pinhole camera; rotation is world-to-camera, row-major. */
typedef struct tsgs_camera {
  double fx, fy, cx, cy;
  double rotation[9];
  double translation[3];
  int width, height;
} tsgs_camera;

typedef struct tsgs_synth_options {
  int views;
  double radius;
  double elevation_deg;
  int width, height;
  double fov_deg;
  uint64_t seed;
  int noisy_depth;
} tsgs_synth_options;

typedef struct tsgs_view_metrics {
  char name[64];
  double psnr;
  double ssim;
} tsgs_view_metrics;

typedef void (*tsgs_metrics_callback)(const char* json_line, void* user);

/* Message for the last failing call on this thread ("" when none). */
TSGS_API const char* tsgs_last_error(void);
TSGS_API const char* tsgs_version(void);
/* 0 = hardware concurrency. */
TSGS_API tsgs_status tsgs_set_threads(int threads);

TSGS_API void tsgs_synth_options_default(tsgs_synth_options* options);
/* Writes a synthetic dataset under out_dir; the manifest path is copied to manifest_out. */
TSGS_API tsgs_status tsgs_synth(const char* spec_path, const char* out_dir, const tsgs_synth_options* options,
                                char* manifest_out, size_t manifest_capacity);

TSGS_API tsgs_status tsgs_dataset_load(const char* path, tsgs_dataset** out);
TSGS_API void tsgs_dataset_free(tsgs_dataset* dataset);
TSGS_API size_t tsgs_dataset_view_count(const tsgs_dataset* dataset);
TSGS_API int tsgs_dataset_instance_count(const tsgs_dataset* dataset);
TSGS_API tsgs_status tsgs_dataset_camera(const tsgs_dataset* dataset, size_t view, tsgs_camera* out);
TSGS_API tsgs_status tsgs_dataset_view_split(const tsgs_dataset* dataset, size_t view, tsgs_split* out);

TSGS_API tsgs_status tsgs_train_config_create(tsgs_train_config** out);
TSGS_API void tsgs_train_config_free(tsgs_train_config* config);
/* Applies a key = value file. Repeated keys are an error. */
TSGS_API tsgs_status tsgs_train_config_load_file(tsgs_train_config* config, const char* path);
/* Sets one key; setting a key already given with a different value is a conflict. */
TSGS_API tsgs_status tsgs_train_config_set(tsgs_train_config* config, const char* key, const char* value);

/* Trains from scratch. out_dir (may be NULL) receives checkpoints and metrics.ndjson;
   callback (may be NULL) receives every metrics line. */
TSGS_API tsgs_status tsgs_train(const tsgs_dataset* dataset, const tsgs_train_config* config, const char* out_dir,
                                tsgs_metrics_callback callback, void* user, tsgs_model** out);

TSGS_API tsgs_status tsgs_model_load(const char* path, tsgs_model** out);
TSGS_API tsgs_status tsgs_model_save(const tsgs_model* model, const char* path);
TSGS_API void tsgs_model_free(tsgs_model* model);
TSGS_API size_t tsgs_model_size(const tsgs_model* model);
TSGS_API int tsgs_model_instance_count(const tsgs_model* model);
TSGS_API uint64_t tsgs_model_iteration(const tsgs_model* model);
/* Gaussians whose identity is background or below the probability threshold. */
TSGS_API tsgs_status tsgs_model_out_of_roi(const tsgs_model* model, double prob_threshold, size_t* count);

/* Reads every "camera = ..." record (18 numbers) of a text file; dataset manifests qualify. */
TSGS_API tsgs_status tsgs_cameras_from_file(const char* path, tsgs_camera* out, size_t capacity, size_t* count);
TSGS_API tsgs_status tsgs_camera_ring(int count, double radius, double elevation_deg, int width, int height,
                                      double fov_deg, tsgs_camera* out);

/* Raw channel values, row-major, interleaved. background_depth <= 0 picks the default for this camera set. */
TSGS_API tsgs_status tsgs_render(const tsgs_model* model, const tsgs_camera* camera, tsgs_channel channel,
                                 double background_depth, double* out, size_t capacity);
/* Writes <stem>_<channel>.png (id: _id_class.png and _id_pca.png; depth adds a .txt range sidecar). */
TSGS_API tsgs_status tsgs_render_to_png(const tsgs_model* model, const tsgs_camera* cameras, size_t camera_count,
                                        tsgs_channel channel, const char* out_dir);

TSGS_API tsgs_status tsgs_evaluate(const tsgs_model* model, const tsgs_dataset* dataset, tsgs_split split,
                                   tsgs_view_metrics* out, size_t capacity, size_t* count);

TSGS_API tsgs_status tsgs_import_colmap(const char* sparse_dir, int instance_count, const char* manifest_out);

#ifdef __cplusplus
}
#endif

#endif
