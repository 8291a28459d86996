#pragma once

// Umbrella header: simulation and consensus certification for opinion
// dynamics with time-variable pointwise and distributed delays.

#include "hkdelay/analysis.hpp"
#include "hkdelay/cli_app.hpp"
#include "hkdelay/io.hpp"
#include "hkdelay/meanfield.hpp"
#include "hkdelay/model.hpp"
#include "hkdelay/scenario_json.hpp"
#include "hkdelay/solver.hpp"
#include "hkdelay/trajectory.hpp"
#include "hkdelay/vec_ops.hpp"
