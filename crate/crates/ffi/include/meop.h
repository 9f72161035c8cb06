#ifndef MEOP_H
#define MEOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Event bits reported in `MeopCommand.events`.
#define MEOP_EVENT_SEARCH_STARTED 1

#define MEOP_EVENT_OPTIMUM_FOUND (1 << 1)

#define MEOP_EVENT_LOAD_INCREASE (1 << 2)

#define MEOP_EVENT_LOAD_DECREASE (1 << 3)

#define MEOP_EVENT_METRIC_CONVERGED (1 << 4)

#define MEOP_EVENT_STALL_RECOVERED (1 << 5)

typedef enum MeopThresholdMode {
  MEOP_THRESHOLD_MODE_RELATIVE = 0,
  MEOP_THRESHOLD_MODE_ABSOLUTE = 1,
} MeopThresholdMode;

typedef enum MeopStatus {
  MEOP_STATUS_OK = 0,
  MEOP_STATUS_NULL_POINTER = 1,
  MEOP_STATUS_INVALID_ARGUMENT = 2,
  MEOP_STATUS_STALL = 3,
  MEOP_STATUS_DIVERGED = 4,
  MEOP_STATUS_PLANT_CANNOT_RUN = 5,
  MEOP_STATUS_INTERNAL = 99,
} MeopStatus;

typedef enum MeopLoadKind {
  MEOP_LOAD_KIND_NONE = 0,
  MEOP_LOAD_KIND_LOW = 1,
  MEOP_LOAD_KIND_HIGH = 2,
} MeopLoadKind;

typedef enum MeopMode {
  MEOP_MODE_PHASE_I_SEARCH = 0,
  MEOP_MODE_MONITORING = 1,
  MEOP_MODE_DOWNWARD_SWEEP = 2,
  MEOP_MODE_RAISE_CONVERGE = 3,
} MeopMode;

// Opaque tracking controller with its state.
typedef struct MeopController MeopController;

// Opaque simulated plant.
typedef struct MeopPlant MeopPlant;

// Motor constants, SI units.
typedef struct MeopMotorParams {
  double resistance;
  double inductance;
  double back_emf_const;
  double torque_const;
  double inertia;
  double viscous_drag;
  double gear_ratio;
} MeopMotorParams;

// Output-shaft load presets (N·m, rad).
typedef struct MeopLoadPresets {
  double friction;
  double window_start;
  double window_end;
  double low_peak;
  double high_peak;
} MeopLoadPresets;

typedef struct MeopSensorConfig {
  double sample_rate;
  double noise_sigma;
  uint64_t seed;
} MeopSensorConfig;

typedef struct MeopControllerConfig {
  double v_min;
  double v_max;
  double v_init;
  double dv;
  size_t n_cycles;
  size_t warmup_cycles;
  enum MeopThresholdMode threshold_mode;
  double delta_plus;
  double delta_minus;
  double eps_load;
  double metric_floor;
  double stall_raise_step;
} MeopControllerConfig;

// Waveform features of one cycle.
typedef struct MeopFeatures {
  double peak;
  double valley;
  double ac;
  double dc;
  double ac_time;
  double metric;
} MeopFeatures;

// Per-cycle measurement produced by [`meop_plant_run_cycle`].
typedef struct MeopCycle {
  double voltage;
  double period;
  // Simulated time at the end of the cycle (s).
  double t_end;
  double energy;
  double power;
  struct MeopFeatures features;
  size_t n_samples;
} MeopCycle;

// Controller reply to one cycle or stall.
typedef struct MeopCommand {
  // Voltage to apply next (V).
  double voltage;
  enum MeopMode mode;
  double v_star;
  // True when this cycle completed an averaging batch.
  bool batch_done;
  // OR of `MEOP_EVENT_*` bits raised by this call.
  uint32_t events;
} MeopCommand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *meop_last_error(void);

// Library version as a static NUL-terminated string.
const char *meop_version(void);

struct MeopMotorParams meop_motor_params_default(void);

struct MeopLoadPresets meop_load_presets_default(void);

struct MeopSensorConfig meop_sensor_config_default(void);

struct MeopControllerConfig meop_controller_config_default(void);

// Create a plant at rest under `load`. Null `motor`, `presets` or `sensor`
// select the defaults.
//
// # Safety
// Non-null pointers must point to valid structs; `out` must be writable.
enum MeopStatus meop_plant_new(const struct MeopMotorParams *motor,
                               const struct MeopLoadPresets *presets,
                               const struct MeopSensorConfig *sensor,
                               enum MeopLoadKind load,
                               struct MeopPlant **out);

// # Safety
// `plant` must come from [`meop_plant_new`] and not be used afterwards.
void meop_plant_free(struct MeopPlant *plant);

// Switch the load condition; takes effect from the next cycle.
//
// # Safety
// `plant` must be a live handle.
enum MeopStatus meop_plant_set_load(struct MeopPlant *plant, enum MeopLoadKind load);

// Simulated time of the plant (s), or NaN for a null handle.
//
// # Safety
// `plant` must be a live handle or null.
double meop_plant_time(const struct MeopPlant *plant);

// Run one output-shaft revolution at `voltage` and measure it.
//
// # Safety
// `plant` must be a live handle; `out` must be writable.
enum MeopStatus meop_plant_run_cycle(struct MeopPlant *plant,
                                     double voltage,
                                     struct MeopCycle *out);

// Waveform features of `n` current samples taken at `sample_rate` over a
// cycle of length `period`.
//
// # Safety
// `samples_ptr` must point to `n` readable doubles; `out` must be writable.
enum MeopStatus meop_extract_features(const double *samples_ptr,
                                      size_t n,
                                      double sample_rate,
                                      double period,
                                      struct MeopFeatures *out);

// Energy per cycle `V · mean(I) · period` (J).
//
// # Safety
// `samples_ptr` must point to `n` readable doubles; `out` must be writable.
enum MeopStatus meop_cycle_energy(const double *samples_ptr,
                                  size_t n,
                                  double voltage,
                                  double period,
                                  double *out);

// Create a controller and start Phase I at time 0. `first` (optional)
// receives the initial command. A null `cfg` selects the defaults.
//
// # Safety
// Non-null pointers must be valid; `out` must be writable.
enum MeopStatus meop_controller_new(const struct MeopControllerConfig *cfg,
                                    struct MeopController **out,
                                    struct MeopCommand *first);

// # Safety
// `ctrl` must come from [`meop_controller_new`] and not be used afterwards.
void meop_controller_free(struct MeopController *ctrl);

// Feed one measured cycle taken at the currently commanded voltage.
//
// # Safety
// `ctrl` must be a live handle; `cycle` readable; `out` writable.
enum MeopStatus meop_controller_on_cycle(struct MeopController *ctrl,
                                         const struct MeopCycle *cycle,
                                         struct MeopCommand *out);

// Report a stall at the commanded voltage at simulated time `time`.
// Returns `MEOP_STATUS_PLANT_CANNOT_RUN` if the stall happened at V_max.
//
// # Safety
// `ctrl` must be a live handle; `out` writable.
enum MeopStatus meop_controller_on_stall(struct MeopController *ctrl,
                                         double time,
                                         struct MeopCommand *out);

// Current command without advancing the controller.
//
// # Safety
// `ctrl` must be a live handle; `out` writable.
enum MeopStatus meop_controller_state(const struct MeopController *ctrl, struct MeopCommand *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEOP_H */
