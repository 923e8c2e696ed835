#pragma once

// Umbrella header for the transfer benchmark toolkit.

#include "xfb/errors.hpp"
#include "xfb/ledger.hpp"
#include "xfb/metrics.hpp"
#include "xfb/plan.hpp"
#include "xfb/report.hpp"
#include "xfb/rng.hpp"
#include "xfb/scorer.hpp"
#include "xfb/signals.hpp"
#include "xfb/stages.hpp"
#include "xfb/study.hpp"
#include "xfb/synthgen.hpp"
#include "xfb/transferscore.hpp"
