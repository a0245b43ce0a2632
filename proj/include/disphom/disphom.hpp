#pragma once

#include "disphom/coincidence.hpp"
#include "disphom/constants.hpp"
#include "disphom/curve_analysis.hpp"
#include "disphom/errors.hpp"
#include "disphom/faddeeva.hpp"
#include "disphom/fitting.hpp"
#include "disphom/oracle.hpp"
#include "disphom/parallel.hpp"
#include "disphom/quadrature.hpp"
#include "disphom/random.hpp"
#include "disphom/scale.hpp"
#include "disphom/spectral.hpp"
#include "disphom/synthetic.hpp"
#include "disphom/types.hpp"
