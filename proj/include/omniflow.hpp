#pragma once

#include "omniflow/error.hpp"
#include "omniflow/rational.hpp"
#include "omniflow/symmat.hpp"
#include "omniflow/polynomial.hpp"
#include "omniflow/polynomial_sum.hpp"
#include "omniflow/families.hpp"
#include "omniflow/convexity.hpp"
#include "omniflow/sampling.hpp"
#include "omniflow/time_poly.hpp"
#include "omniflow/field.hpp"
#include "omniflow/flow.hpp"
#include "omniflow/verify.hpp"
#include "omniflow/chebyshev.hpp"
#include "omniflow/wkb2d.hpp"
#include "omniflow/assignment.hpp"
#include "omniflow/mak.hpp"
