#pragma once

#include "sthawkes/background.hpp"
#include "sthawkes/bayes.hpp"
#include "sthawkes/bench.hpp"
#include "sthawkes/em.hpp"
#include "sthawkes/field.hpp"
#include "sthawkes/fit.hpp"
#include "sthawkes/io.hpp"
#include "sthawkes/likelihood.hpp"
#include "sthawkes/model.hpp"
#include "sthawkes/optimize.hpp"
#include "sthawkes/random.hpp"
#include "sthawkes/simulate.hpp"
