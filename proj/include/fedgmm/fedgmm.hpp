#pragma once

// Umbrella header: the full library surface.

#include "fedgmm/checkpoint.hpp"
#include "fedgmm/config.hpp"
#include "fedgmm/datagen.hpp"
#include "fedgmm/errors.hpp"
#include "fedgmm/eval.hpp"
#include "fedgmm/federation.hpp"
#include "fedgmm/math.hpp"
#include "fedgmm/mixture.hpp"
#include "fedgmm/rng.hpp"
