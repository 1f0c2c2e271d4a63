#pragma once

#include "serscope/model.hpp"
#include "serscope/parser.hpp"
#include "serscope/semantics.hpp"
#include "serscope/consistency.hpp"
#include "serscope/depgraph.hpp"
#include "serscope/smt.hpp"
#include "serscope/encoder.hpp"
#include "serscope/search.hpp"
#include "serscope/replay.hpp"
