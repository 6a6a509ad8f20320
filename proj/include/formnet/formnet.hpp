#pragma once

#include "formnet/controller.hpp"
#include "formnet/estimation.hpp"
#include "formnet/graph.hpp"
#include "formnet/harness.hpp"
#include "formnet/loss.hpp"
#include "formnet/scenario_io.hpp"
#include "formnet/spanning_tree.hpp"
#include "formnet/types.hpp"
#include "formnet/version.hpp"
