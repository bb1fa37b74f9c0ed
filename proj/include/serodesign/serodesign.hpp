#pragma once

#include "serodesign/errors.hpp"
#include "serodesign/model.hpp"
#include "serodesign/copt.hpp"
#include "serodesign/minimax.hpp"
#include "serodesign/strata.hpp"
#include "serodesign/simulate.hpp"
#include "serodesign/config.hpp"
#include "serodesign/report.hpp"
