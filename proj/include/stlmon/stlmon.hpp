#pragma once

#include "stlmon/formula.hpp"
#include "stlmon/parser.hpp"
#include "stlmon/spec_lang.hpp"
#include "stlmon/trace.hpp"
#include "stlmon/oracle.hpp"
#include "stlmon/window.hpp"
#include "stlmon/monitor.hpp"
#include "stlmon/explain.hpp"
#include "stlmon/mitigation.hpp"
#include "stlmon/violation_log.hpp"
#include "stlmon/stats.hpp"
#include "stlmon/harness.hpp"
