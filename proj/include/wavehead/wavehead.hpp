#pragma once

#include "wavehead/baselines.hpp"
#include "wavehead/data.hpp"
#include "wavehead/errors.hpp"
#include "wavehead/gradcheck.hpp"
#include "wavehead/harness.hpp"
#include "wavehead/heads.hpp"
#include "wavehead/linalg.hpp"
#include "wavehead/metrics.hpp"
#include "wavehead/params_io.hpp"
#include "wavehead/report.hpp"
#include "wavehead/rng.hpp"
#include "wavehead/training.hpp"
