#pragma once

// Umbrella header.
#include "drmww/core_math.hpp"
#include "drmww/data.hpp"
#include "drmww/errors.hpp"
#include "drmww/estimators.hpp"
#include "drmww/gpi.hpp"
#include "drmww/propensity.hpp"
#include "drmww/report.hpp"
#include "drmww/simstudy.hpp"
#include "drmww/ugee.hpp"
