#pragma once

#include "esgrad/config.hpp"
#include "esgrad/estimators.hpp"
#include "esgrad/exact_sum.hpp"
#include "esgrad/experiments.hpp"
#include "esgrad/io.hpp"
#include "esgrad/metaopt.hpp"
#include "esgrad/optimizers.hpp"
#include "esgrad/oracles.hpp"
#include "esgrad/registry.hpp"
#include "esgrad/rng.hpp"
#include "esgrad/schedules.hpp"
#include "esgrad/system.hpp"
#include "esgrad/tasks/influence.hpp"
#include "esgrad/tasks/mlp_lr.hpp"
#include "esgrad/tasks/quadratic.hpp"
#include "esgrad/tasks/sequence.hpp"
#include "esgrad/tasks/telescope.hpp"
#include "esgrad/tasks/toy2d.hpp"
