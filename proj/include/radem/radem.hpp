#pragma once

#include "radem/bounds.hpp"
#include "radem/chaos.hpp"
#include "radem/common.hpp"
#include "radem/core.hpp"
#include "radem/cubical.hpp"
#include "radem/experiments.hpp"
#include "radem/graphs.hpp"
#include "radem/matrix.hpp"
#include "radem/moments.hpp"
#include "radem/report.hpp"
#include "radem/rng.hpp"
#include "radem/tables.hpp"
#include "radem/testfns.hpp"
