#ifndef CARMA_CARMA_HPP
#define CARMA_CARMA_HPP

#include "carma/analytics.hpp"
#include "carma/core.hpp"
#include "carma/dynamics.hpp"
#include "carma/error.hpp"
#include "carma/levy.hpp"
#include "carma/model.hpp"
#include "carma/operators.hpp"
#include "carma/parallel.hpp"
#include "carma/quadrature.hpp"
#include "carma/rng.hpp"
#include "carma/stats.hpp"

#endif
