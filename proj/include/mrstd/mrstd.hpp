#ifndef MRSTD_MRSTD_HPP
#define MRSTD_MRSTD_HPP

#include "mrstd/core.hpp"
#include "mrstd/estimate.hpp"
#include "mrstd/ics_test.hpp"
#include "mrstd/inference.hpp"
#include "mrstd/numeric.hpp"
#include "mrstd/randomization.hpp"
#include "mrstd/standardization.hpp"
#include "mrstd/working_models.hpp"

#endif  // MRSTD_MRSTD_HPP
