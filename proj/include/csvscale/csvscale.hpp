#ifndef CSVSCALE_CSVSCALE_HPP
#define CSVSCALE_CSVSCALE_HPP

#include "csvscale/baselines.hpp"
#include "csvscale/data.hpp"
#include "csvscale/errors.hpp"
#include "csvscale/fit_report.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/lossmap.hpp"
#include "csvscale/optimizer.hpp"
#include "csvscale/parallel.hpp"
#include "csvscale/report.hpp"
#include "csvscale/salience.hpp"
#include "csvscale/synth.hpp"
#include "csvscale/types.hpp"

#endif  // CSVSCALE_CSVSCALE_HPP
