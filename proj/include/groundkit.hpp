#pragma once
// Umbrella header.

#include "groundkit/box.hpp"
#include "groundkit/completion.hpp"
#include "groundkit/config.hpp"
#include "groundkit/curation.hpp"
#include "groundkit/dataset.hpp"
#include "groundkit/difficulty.hpp"
#include "groundkit/error.hpp"
#include "groundkit/eval.hpp"
#include "groundkit/grpo.hpp"
#include "groundkit/reward.hpp"
#include "groundkit/rng.hpp"
#include "groundkit/sandbox.hpp"
#include "groundkit/service.hpp"
#include "groundkit/templates.hpp"
#include "groundkit/text.hpp"
