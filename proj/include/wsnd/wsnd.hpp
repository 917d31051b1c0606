#pragma once

#include "wsnd/error.hpp"
#include "wsnd/rng.hpp"
#include "wsnd/special.hpp"
#include "wsnd/quadrature.hpp"
#include "wsnd/model.hpp"
#include "wsnd/estimators.hpp"
#include "wsnd/detectors.hpp"
#include "wsnd/theory.hpp"
#include "wsnd/netsim.hpp"
#include "wsnd/experiments.hpp"
#include "wsnd/config.hpp"
