#include <doctest.h>

#include "support/grad_harness.hpp"

using namespace inklab;
using namespace inklab::testing;

TEST_CASE("analytic gradients match central finite differences for every op kind") {
  const auto res = run_grad_checks(/*cases_per_op=*/10, /*tolerance=*/1e-3, /*seed=*/1234);
  INFO(res.detail);
  CHECK(res.failures == 0);
  CHECK(res.cases > 0);
}

TEST_CASE("per-coordinate finite differences on the structured ops") {
  for (const auto& spec : all_op_specs()) {
    if (spec.name != "conv2d" && spec.name != "group_norm" && spec.name != "matmul" &&
        spec.name != "embedding_mean")
      continue;
    const auto res = run_coordinate_checks(spec, /*cases=*/3, /*tolerance=*/1e-3, /*seed=*/99);
    INFO(spec.name << ": " << res.detail);
    CHECK(res.failures == 0);
  }
}
