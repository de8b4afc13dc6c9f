#pragma once

// Sensor-network localization under NLOS bias: network and measurement
// model, lifted convex relaxation, operator-splitting solver, exactness
// certification, and experiment sweeps.

#include "nlosloc/analysis.hpp"
#include "nlosloc/experiment.hpp"
#include "nlosloc/geometry.hpp"
#include "nlosloc/io.hpp"
#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"
#include "nlosloc/program.hpp"
#include "nlosloc/rng.hpp"
#include "nlosloc/solver.hpp"
