// Copyright 2026 The maskdet Authors. All Rights Reserved.
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

#ifndef MASKDET_TESTS_UNIT_TEST_UTIL_H_
#define MASKDET_TESTS_UNIT_TEST_UTIL_H_

#include <filesystem>
#include <string>

#include <unistd.h>

#include "maskdet/tensor/rng.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet::testing {

template <class T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Values bounded away from zero, for checks across the relu kink.
template <class T>
BasicTensor<T> random_tensor_away_from_zero(Shape shape, Rng& rng, double margin) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("maskdet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace maskdet::testing

#endif  // MASKDET_TESTS_UNIT_TEST_UTIL_H_
