#pragma once

#include "convexdp/generators.hpp"

namespace cdp::testing {

using gen::random_tree;
using gen::uniform_tree;

}  // namespace cdp::testing
