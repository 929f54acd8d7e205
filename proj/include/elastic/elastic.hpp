#pragma once

#include "elastic/critical.hpp"
#include "elastic/enhancement.hpp"
#include "elastic/errors.hpp"
#include "elastic/formfactor.hpp"
#include "elastic/numerics.hpp"
#include "elastic/parameters.hpp"
#include "elastic/rmtsim.hpp"
