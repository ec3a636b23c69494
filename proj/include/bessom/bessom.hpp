#pragma once

// Umbrella header for the analysis library. The HTTP pieces (http_clients.hpp,
// providers.hpp, service.hpp) are left out because they pull in the HTTP stack.

#include "bessom/agents.hpp"
#include "bessom/bullets.hpp"
#include "bessom/calendar.hpp"
#include "bessom/config.hpp"
#include "bessom/error.hpp"
#include "bessom/health.hpp"
#include "bessom/ingest.hpp"
#include "bessom/knowledge.hpp"
#include "bessom/llm.hpp"
#include "bessom/mock_llm.hpp"
#include "bessom/op_select.hpp"
#include "bessom/pipeline.hpp"
#include "bessom/records.hpp"
#include "bessom/rpca.hpp"
#include "bessom/spread.hpp"
#include "bessom/synthetic.hpp"
#include "bessom/thermal.hpp"
#include "bessom/voltage.hpp"
