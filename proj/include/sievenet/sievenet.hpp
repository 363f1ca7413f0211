#pragma once

// Umbrella header: penalized least-squares estimation over single-hidden-layer
// tanh/ReLU network sieves, with the identifiability machinery, entropy-bound
// calculators, and the simulation harness.

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"
#include "sievenet/model.hpp"
#include "sievenet/penalty.hpp"
#include "sievenet/rng.hpp"
#include "sievenet/sieve.hpp"
#include "sievenet/simulate.hpp"
#include "sievenet/trainer.hpp"
#include "sievenet/version.hpp"
