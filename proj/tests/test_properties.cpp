#include "doctest.h"
#include "property_suite.hpp"

TEST_CASE("invariant suite") {
  for (const auto& r : ram::test::run_property_suite(2024)) {
    INFO(r.name, ": ", r.detail);
    CHECK(r.ok);
  }
}
