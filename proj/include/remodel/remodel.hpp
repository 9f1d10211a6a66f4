#pragma once

#include "remodel/bench.hpp"
#include "remodel/catalog.hpp"
#include "remodel/common.hpp"
#include "remodel/cost_model.hpp"
#include "remodel/datastore.hpp"
#include "remodel/executor.hpp"
#include "remodel/linreg.hpp"
#include "remodel/logreg.hpp"
#include "remodel/naive_bayes.hpp"
#include "remodel/payload.hpp"
#include "remodel/planner.hpp"
#include "remodel/synth.hpp"
