#pragma once

#include <ostream>

namespace brafl_tools {

/// Small randomized property suite; prints one line per property.
bool run_selftest(std::ostream& out);

}  // namespace brafl_tools
