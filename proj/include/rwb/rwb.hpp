#pragma once

#include "rwb/analysis.hpp"
#include "rwb/core.hpp"
#include "rwb/env.hpp"
#include "rwb/extraction.hpp"
#include "rwb/io.hpp"
#include "rwb/linalg.hpp"
#include "rwb/llm_client.hpp"
#include "rwb/metrics.hpp"
#include "rwb/pipeline.hpp"
#include "rwb/policies.hpp"
#include "rwb/reward.hpp"
#include "rwb/rng.hpp"
