#pragma once

#include "rcp/errors.hpp"
#include "rcp/features.hpp"
#include "rcp/geometry.hpp"
#include "rcp/io.hpp"
#include "rcp/matching.hpp"
#include "rcp/metrics.hpp"
#include "rcp/pointwise.hpp"
#include "rcp/regularizer.hpp"
#include "rcp/rng.hpp"
#include "rcp/run_config.hpp"
#include "rcp/solver.hpp"
