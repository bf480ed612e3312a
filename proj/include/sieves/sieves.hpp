#pragma once

// Umbrella header.

#include "sieves/box.hpp"
#include "sieves/confidence.hpp"
#include "sieves/config.hpp"
#include "sieves/error.hpp"
#include "sieves/geometry.hpp"
#include "sieves/judge.hpp"
#include "sieves/labeling.hpp"
#include "sieves/metrics.hpp"
#include "sieves/prompts.hpp"
#include "sieves/report.hpp"
#include "sieves/simulate.hpp"
#include "sieves/trace.hpp"
