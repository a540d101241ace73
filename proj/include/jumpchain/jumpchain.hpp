#pragma once

#include "error.hpp"
#include "format.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "quadrature.hpp"
#include "expression.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "discretize.hpp"
#include "forms.hpp"
#include "semigroup.hpp"
#include "chain.hpp"
#include "diagnostics.hpp"
#include "conditions.hpp"
#include "config.hpp"
#include "pipeline.hpp"
