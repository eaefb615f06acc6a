#pragma once

#include "rsb/bridge.hpp"
#include "rsb/checkpoint.hpp"
#include "rsb/config.hpp"
#include "rsb/csv.hpp"
#include "rsb/error.hpp"
#include "rsb/ipf.hpp"
#include "rsb/metrics.hpp"
#include "rsb/nnet.hpp"
#include "rsb/sinkhorn.hpp"
#include "rsb/svg.hpp"
#include "rsb/toydata.hpp"
#include "rsb/types.hpp"
