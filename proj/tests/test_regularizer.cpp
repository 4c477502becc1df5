#include <catch2/catch_amalgamated.hpp>

#include "rcp/rcp.hpp"
