#pragma once

// Umbrella header for the library (the CLI layer lives in henn/cli.hpp).

#include "henn/core.hpp"
#include "henn/random.hpp"
#include "henn/io.hpp"
#include "henn/epsnet.hpp"
#include "henn/delaunay.hpp"
#include "henn/reduce.hpp"
#include "henn/navgraph.hpp"
#include "henn/index.hpp"
#include "henn/bench.hpp"
