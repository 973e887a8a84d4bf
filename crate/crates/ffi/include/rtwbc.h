#ifndef RTWBC_H
#define RTWBC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtwbcBranch {
  RTWBC_BRANCH_ALIGN = 0,
  RTWBC_BRANCH_BACKWARD = 1,
  RTWBC_BRANCH_FORWARD = 2,
} RtwbcBranch;

typedef enum RtwbcStatus {
  RTWBC_STATUS_OK = 0,
  RTWBC_STATUS_NULL_POINTER = 1,
  RTWBC_STATUS_INVALID_ARGUMENT = 2,
  RTWBC_STATUS_PARSE = 3,
  RTWBC_STATUS_IO = 4,
  RTWBC_STATUS_DECODE = 5,
  RTWBC_STATUS_BUFFER_TOO_SMALL = 6,
  RTWBC_STATUS_NUMERIC = 7,
  RTWBC_STATUS_PANIC = 8,
} RtwbcStatus;

// Opaque variable admittance controller.
typedef struct RtwbcAdmittance RtwbcAdmittance;

// Opaque robot model.
typedef struct RtwbcModel RtwbcModel;

typedef struct RtwbcAdmittanceParams {
  double m;
  double zeta;
  double k_min;
  double k_max;
  double a;
  double b;
  double c_minus;
  double c_plus;
  double f_thres;
  size_t filter_window;
  double sample_rate;
} RtwbcAdmittanceParams;

typedef struct RtwbcStabilityCheck {
  double lhs;
  double rhs;
  bool holds;
} RtwbcStabilityCheck;

typedef struct RtwbcTelemetry {
  double psi;
  double alpha;
  double k;
  double k_dot;
  double bound;
  bool violation;
  bool fault;
  double e[6];
} RtwbcTelemetry;

typedef struct RtwbcSegment {
  uint32_t id;
  double pose[7];
} RtwbcSegment;

typedef struct RtwbcBaseParams {
  double epsilon;
  double delta;
  double lambda;
  double sigma;
  double v_max;
  double omega_max;
} RtwbcBaseParams;

typedef struct RtwbcBasePose {
  double x;
  double y;
  double theta;
} RtwbcBasePose;

typedef struct RtwbcBaseCommand {
  double v;
  double omega;
  enum RtwbcBranch branch;
} RtwbcBaseCommand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty after a success-only history.
// The pointer stays valid until the next failing call on the same thread.
const char *rtwbc_last_error(void);

// The bundled 10-DOF upper-body model.
enum RtwbcStatus rtwbc_model_default(struct RtwbcModel **out);

// Loads a model from a TOML file.
enum RtwbcStatus rtwbc_model_load(const char *path, struct RtwbcModel **out);

void rtwbc_model_free(struct RtwbcModel *model);

enum RtwbcStatus rtwbc_model_dof(const struct RtwbcModel *model, size_t *out);

// Pose of `link` in the footprint frame at `q` (`n` = dof values), written to `out_pose[7]`.
enum RtwbcStatus rtwbc_model_fk(const struct RtwbcModel *model,
                                const double *q,
                                size_t n,
                                const char *link,
                                double *out_pose);

// 6 x dof geometric Jacobian `[linear; angular]` of `link`, row-major into `out`,
// which must hold `cap >= 6 * dof` doubles.
enum RtwbcStatus rtwbc_model_jacobian(const struct RtwbcModel *model,
                                      const double *q,
                                      size_t n,
                                      const char *link,
                                      double *out,
                                      size_t cap);

enum RtwbcStatus rtwbc_admittance_params_default(struct RtwbcAdmittanceParams *out);

// Evaluates the sufficient stability condition; does not validate the parameters.
enum RtwbcStatus rtwbc_check_stability(const struct RtwbcAdmittanceParams *params,
                                       struct RtwbcStabilityCheck *out);

enum RtwbcStatus rtwbc_admittance_new(const struct RtwbcAdmittanceParams *params,
                                      struct RtwbcAdmittance **out);

void rtwbc_admittance_free(struct RtwbcAdmittance *adm);

// One control period. `force` and `torque` (3 doubles each) are a new sensor sample
// when `has_sample` is true and are ignored otherwise. Writes the commanded pose to
// `out_pose[7]`; `out_telemetry` may be null.
enum RtwbcStatus rtwbc_admittance_step(struct RtwbcAdmittance *adm,
                                       const double *x_ref,
                                       const double *force,
                                       const double *torque,
                                       bool has_sample,
                                       double dt,
                                       double *out_pose,
                                       struct RtwbcTelemetry *out_telemetry);

// Stability-bound violations recorded so far.
enum RtwbcStatus rtwbc_admittance_violations(const struct RtwbcAdmittance *adm, uint64_t *out);

// Decodes one datagram. Up to `cap` segments are written to `segments`; `out_count`
// receives the number in the datagram, and `BufferTooSmall` is returned if it
// exceeds `cap`.
enum RtwbcStatus rtwbc_datagram_decode(const uint8_t *bytes,
                                       size_t len,
                                       uint32_t *out_sequence,
                                       double *out_timestamp,
                                       struct RtwbcSegment *segments,
                                       size_t cap,
                                       size_t *out_count);

enum RtwbcStatus rtwbc_base_params_default(struct RtwbcBaseParams *out);

// Base command toward a goal given in the robot footprint frame as `(x, y, yaw)`.
enum RtwbcStatus rtwbc_base_command(const struct RtwbcBasePose *goal,
                                    const struct RtwbcBaseParams *params,
                                    struct RtwbcBaseCommand *out);

// Integrates a unicycle command over `dt`.
enum RtwbcStatus rtwbc_base_step(const struct RtwbcBasePose *pose,
                                 const struct RtwbcBaseCommand *cmd,
                                 double dt,
                                 struct RtwbcBasePose *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTWBC_H */
