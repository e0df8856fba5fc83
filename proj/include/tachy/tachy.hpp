#pragma once

// Umbrella header: the whole library.

#include "tachy/core.hpp"
#include "tachy/experiment.hpp"
#include "tachy/ftl.hpp"
#include "tachy/kinematics.hpp"
#include "tachy/solver.hpp"
#include "tachy/worldline.hpp"
