// Copyright 2026 The feccm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Thresholds for acceptance checks 6 and 7, derived by tests/reference_run.cpp
// on seeds 101-110 (the acceptance checks use seeds 1-10) with the setups in
// acceptance_setup.hpp. Reference output:
//
//   FE-CCM(unified) minus base accuracy, mean over tasks:
//     per seed  .0193 .0220 .0087 .0233 .0060 .0427 .0267 .0093 .0100 .0160
//     mean 0.018400, standard error 0.003500
//   full labels minus half-and-half labels, FE-CCM(unified), mean over tasks:
//     per seed  .006 .003 .006 -.004 .003 -.008 .003 .010 -.004 .007
//     mean 0.002200, standard error 0.001812
//
// Each threshold sits three standard errors from the reference mean on the
// lenient side.

#ifndef FECCM_TESTS_ACCEPTANCE_FIXTURE_HPP_
#define FECCM_TESTS_ACCEPTANCE_FIXTURE_HPP_

namespace feccm::acceptance {

// 0.018400 - 3 * 0.003500
inline constexpr double kOrderingMarginThreshold = 0.0079;
// 0.002200 + 3 * 0.001812
inline constexpr double kCoverageGapThreshold = 0.007637;

}  // namespace feccm::acceptance

#endif  // FECCM_TESTS_ACCEPTANCE_FIXTURE_HPP_
