// Copyright 2026 The pillardet Authors
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

#ifndef PILLARDET__PARALLEL_HPP_
#define PILLARDET__PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace pillardet
{

// Worker count from PILLARDET_NUM_THREADS, defaulting to 1.
int num_threads();
void set_num_threads(int n);

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks never overlap, so callers
// that write only to their own indices stay deterministic for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)> & fn);

}  // namespace pillardet

#endif  // PILLARDET__PARALLEL_HPP_
