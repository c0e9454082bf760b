#pragma once
// Umbrella include.

#include "fides/aggregation.hpp"
#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/decomposition.hpp"
#include "fides/errors.hpp"
#include "fides/harness.hpp"
#include "fides/metrics.hpp"
#include "fides/prompts.hpp"
#include "fides/retrieval.hpp"
#include "fides/scoring.hpp"
#include "fides/text.hpp"
#include "fides/verify_edit.hpp"
