#ifndef NVTHERM_H
#define NVTHERM_H

/* C interface to the nanothermometer simulator. All entry points return a
 * status code (NVT_OK on success); nvt_last_error() describes the most
 * recent failure on the calling thread. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define NVT_OK 0
#define NVT_ERR_CONFIG 2  /* bad or inconsistent input */
#define NVT_ERR_NUMERIC 3 /* solver or fit failure */
#define NVT_ERR_INVALID 4 /* null handle or bad argument */

/* Opaque handle: a parsed config plus the fully built simulation scene. */
typedef struct nvt_scene nvt_scene;

const char* nvt_version(void);

/* Message for the last failing call on this thread; empty string if the
 * last call succeeded. The pointer stays valid until the next call. */
const char* nvt_last_error(void);

/* Build a scene from a config file / config text. On success *out owns the
 * scene; release it with nvt_scene_free. */
int nvt_scene_load(const char* path, nvt_scene** out);
int nvt_scene_load_string(const char* text, nvt_scene** out);
void nvt_scene_free(nvt_scene* scene);

/* Override fields that are commonly set from the command line. */
int nvt_scene_set_seed(nvt_scene* scene, uint64_t seed);
int nvt_scene_set_shots(nvt_scene* scene, long long shots);
int nvt_scene_set_threads(nvt_scene* scene, int threads);

/* Run one subcommand (demag, odmr, fid, cooling, track, heater,
 * sensitivity, calibrate), writing CSV/JSON outputs into out_dir. */
int nvt_run(nvt_scene* scene, const char* command, const char* out_dir);

/* Newline-separated list of files written by the last nvt_run on this
 * scene (manifest last). Valid until the next nvt_run or free. */
const char* nvt_run_files(const nvt_scene* scene);

/* Direct model queries at environment temperature t_K. */
int nvt_magnetization(const nvt_scene* scene, double t_K, double* m);
int nvt_transitions(const nvt_scene* scene, double t_K, double* f_minus_MHz,
                    double* f_plus_MHz);
int nvt_susceptibility(const nvt_scene* scene, double t_K,
                       double* dfdT_MHz_per_K);
int nvt_fid_signal(const nvt_scene* scene, double tau_us, double delta_f_MHz,
                   double* s);
int nvt_sensitivity(const nvt_scene* scene, double* eta_K_per_sqrtHz,
                    double* t_optimal_us);

#ifdef __cplusplus
}
#endif

#endif /* NVTHERM_H */
