#pragma once

#include "crw/analysis.hpp"
#include "crw/cli.hpp"
#include "crw/dp.hpp"
#include "crw/errors.hpp"
#include "crw/evolve.hpp"
#include "crw/io.hpp"
#include "crw/lattice.hpp"
#include "crw/montecarlo.hpp"
#include "crw/policy.hpp"
#include "crw/rng.hpp"
#include "crw/scalar.hpp"
