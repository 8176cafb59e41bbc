// Copyright 2026 the pimann authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <random>
#include <vector>

namespace pimann::detail {

/// Row-major dim x dim orthogonal matrix: QR of a Gaussian matrix drawn from
/// `rng`, with column signs fixed so that R has a positive diagonal.
std::vector<double> random_orthogonal(size_t dim, std::mt19937_64& rng);

}  // namespace pimann::detail
