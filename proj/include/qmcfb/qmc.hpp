#pragma once

#include "qmcfb/qmc/lattice.hpp"
#include "qmcfb/qmc/number_theory.hpp"
#include "qmcfb/qmc/point_set.hpp"
#include "qmcfb/qmc/polylattice.hpp"
#include "qmcfb/qmc/weights.hpp"
