#pragma once

// Umbrella header for the whole library.

#include "scnet/error.hpp"
#include "scnet/rng.hpp"
#include "scnet/spectral.hpp"
#include "scnet/filters.hpp"
#include "scnet/network.hpp"
#include "scnet/training.hpp"
#include "scnet/experiments.hpp"
#include "scnet/io.hpp"
