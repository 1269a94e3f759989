#pragma once

#include "treebio/allometry.hpp"
#include "treebio/csv.hpp"
#include "treebio/errors.hpp"
#include "treebio/evaluation.hpp"
#include "treebio/forest.hpp"
#include "treebio/gpr.hpp"
#include "treebio/model_io.hpp"
#include "treebio/numeric.hpp"
#include "treebio/split.hpp"
#include "treebio/svg.hpp"
#include "treebio/tree_record.hpp"
#include "treebio/uncertainty.hpp"
