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

#include "pillardet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace pillardet
{

namespace
{

int env_threads()
{
  const char * env = std::getenv("PILLARDET_NUM_THREADS");
  if (env == nullptr) {
    return 1;
  }
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::atomic<int> & thread_setting()
{
  static std::atomic<int> n{env_threads()};
  return n;
}

}  // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int n) { thread_setting().store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)> & fn)
{
  const auto workers = static_cast<std::size_t>(num_threads());
  if (workers <= 1 || n < 2 * workers) {
    if (n > 0) {
      fn(0, n);
    }
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back(fn, begin, std::min(n, begin + chunk));
  }
  for (auto & t : pool) {
    t.join();
  }
}

}  // namespace pillardet
