#pragma once

#include "curator/config.hpp"
#include "curator/core.hpp"
#include "curator/error.hpp"
#include "curator/filtering.hpp"
#include "curator/generation.hpp"
#include "curator/manifest.hpp"
#include "curator/metrics.hpp"
#include "curator/oracle_sim.hpp"
#include "curator/rng.hpp"
#include "curator/serialization.hpp"
#include "curator/similarity.hpp"
#include "curator/sweep.hpp"
#include "curator/uncertainty.hpp"
