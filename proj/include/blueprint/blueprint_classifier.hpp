#pragma once

// Umbrella header. Include llm_client.hpp or cli.hpp separately when the
// HTTP backend or the command-line driver is needed.

#include "blueprint/blueprint.hpp"
#include "blueprint/candidate.hpp"
#include "blueprint/classify.hpp"
#include "blueprint/error.hpp"
#include "blueprint/io.hpp"
#include "blueprint/llm_config.hpp"
#include "blueprint/metrics.hpp"
#include "blueprint/pipeline.hpp"
#include "blueprint/rng.hpp"
#include "blueprint/simulation.hpp"
