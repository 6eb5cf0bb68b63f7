#pragma once

// Umbrella header: the whole toolkit.

#include "cheshire/calibrate.hpp"
#include "cheshire/cheshire.hpp"
#include "cheshire/control.hpp"
#include "cheshire/errors.hpp"
#include "cheshire/estimate.hpp"
#include "cheshire/experiment.hpp"
#include "cheshire/graph.hpp"
#include "cheshire/intensity.hpp"
#include "cheshire/model.hpp"
#include "cheshire/objective.hpp"
#include "cheshire/parallel.hpp"
#include "cheshire/poisson.hpp"
#include "cheshire/rng.hpp"
#include "cheshire/simulate.hpp"
