#pragma once

// Umbrella header.

#include "physiomtl/baselines.hpp"
#include "physiomtl/csv.hpp"
#include "physiomtl/errors.hpp"
#include "physiomtl/harness.hpp"
#include "physiomtl/mmash.hpp"
#include "physiomtl/ot.hpp"
#include "physiomtl/rhythm.hpp"
#include "physiomtl/synth.hpp"
#include "physiomtl/task.hpp"
#include "physiomtl/trainer.hpp"
#include "physiomtl/transport_map.hpp"
