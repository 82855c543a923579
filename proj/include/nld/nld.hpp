#pragma once

#include "nld/error.hpp"
#include "nld/kernel.hpp"
#include "nld/grid.hpp"
#include "nld/operator.hpp"
#include "nld/fast_operator.hpp"
#include "nld/spectrum.hpp"
#include "nld/force.hpp"
#include "nld/dynamics.hpp"
#include "nld/equilibria.hpp"
#include "nld/config.hpp"
#include "nld/io.hpp"
