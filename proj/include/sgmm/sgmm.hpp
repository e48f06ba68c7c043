#pragma once

#include "sgmm/bfgs.hpp"
#include "sgmm/data.hpp"
#include "sgmm/design.hpp"
#include "sgmm/estimator.hpp"
#include "sgmm/linalg.hpp"
#include "sgmm/model_file.hpp"
#include "sgmm/moments.hpp"
#include "sgmm/report.hpp"
#include "sgmm/simulate.hpp"
