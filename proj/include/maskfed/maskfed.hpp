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

#ifndef MASKFED_MASKFED_HPP_
#define MASKFED_MASKFED_HPP_

#include "maskfed/client.hpp"
#include "maskfed/datastore.hpp"
#include "maskfed/error.hpp"
#include "maskfed/experiment.hpp"
#include "maskfed/losses.hpp"
#include "maskfed/masked_layers.hpp"
#include "maskfed/metrics.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/optimizer.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/server.hpp"
#include "maskfed/tensors.hpp"
#include "maskfed/verify.hpp"
#include "maskfed/wire_codec.hpp"

#endif  // MASKFED_MASKFED_HPP_
