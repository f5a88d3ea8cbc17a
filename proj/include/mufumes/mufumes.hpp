#pragma once

#include "mufumes/config.hpp"
#include "mufumes/ecm.hpp"
#include "mufumes/errors.hpp"
#include "mufumes/group_lasso.hpp"
#include "mufumes/io.hpp"
#include "mufumes/metrics.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/parallel.hpp"
#include "mufumes/parameter_state.hpp"
#include "mufumes/rng.hpp"
#include "mufumes/simulation.hpp"
#include "mufumes/spline_basis.hpp"
#include "mufumes/ssgl_prior.hpp"
#include "mufumes/tuning.hpp"
