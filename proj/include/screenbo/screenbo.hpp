#pragma once

// Umbrella header.

#include "screenbo/acquisition.hpp"
#include "screenbo/bench.hpp"
#include "screenbo/csv.hpp"
#include "screenbo/data_io.hpp"
#include "screenbo/dataset.hpp"
#include "screenbo/engine.hpp"
#include "screenbo/errors.hpp"
#include "screenbo/gp.hpp"
#include "screenbo/hyperopt.hpp"
#include "screenbo/kernel.hpp"
#include "screenbo/models.hpp"
#include "screenbo/parallel.hpp"
#include "screenbo/policy.hpp"
#include "screenbo/rng.hpp"
#include "screenbo/state.hpp"
#include "screenbo/stats.hpp"
#include "screenbo/synth.hpp"
#include "screenbo/trace.hpp"
