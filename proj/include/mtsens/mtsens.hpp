#pragma once

// Umbrella header.

#include "mtsens/bounds.hpp"
#include "mtsens/errors.hpp"
#include "mtsens/factor_fit.hpp"
#include "mtsens/io.hpp"
#include "mtsens/linalg.hpp"
#include "mtsens/model.hpp"
#include "mtsens/posterior.hpp"
#include "mtsens/prior_geometry.hpp"
#include "mtsens/rng.hpp"
#include "mtsens/sim.hpp"
#include "mtsens/stats.hpp"
