// Copyright 2026 The maskfed Authors.
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

#ifndef MASKFED_TENSORS_HPP_
#define MASKFED_TENSORS_HPP_

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace maskfed {

// A named, shaped parameter tensor in row-major order. The unit exchanged
// between clients and server.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }
  bool operator==(const NamedTensor&) const = default;
};

using TensorList = std::vector<NamedTensor>;

inline std::size_t TotalElements(const TensorList& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

}  // namespace maskfed

#endif  // MASKFED_TENSORS_HPP_
