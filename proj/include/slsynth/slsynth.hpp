#pragma once

// System-level-synthesis toolkit for robust output-feedback control:
// double-Riccati response-map solver, l1 tube tightening, SCP trajectory
// synthesis, benchmark environments, perception-error calibration.

#include "slsynth/bench.hpp"
#include "slsynth/calibration.hpp"
#include "slsynth/environments.hpp"
#include "slsynth/io.hpp"
#include "slsynth/model.hpp"
#include "slsynth/qp.hpp"
#include "slsynth/riccati.hpp"
#include "slsynth/scp.hpp"
#include "slsynth/sls_ops.hpp"
#include "slsynth/spec_json.hpp"
#include "slsynth/tubes.hpp"
#include "slsynth/types.hpp"
