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

#ifndef MASKDET_TESTS_ACCEPTANCE_CRITERIA_H_
#define MASKDET_TESTS_ACCEPTANCE_CRITERIA_H_

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "maskdet/cli/run_config.h"
#include "maskdet/data/dataset.h"
#include "maskdet/nn/model.h"

namespace maskdet::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Collects failed checks; the first few are kept for the report line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) first_ += (first_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failed_ == 0; }
  int total() const { return total_; }
  int failed() const { return failed_; }
  /// "<n> checks" or "<k>/<n> checks failed: ..."
  std::string summary() const;

 private:
  int total_ = 0;
  int failed_ = 0;
  std::string first_;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Desk profile shared by the training criteria: a 60-per-class synthetic
/// corpus on disk, its split, and the proxy-pretrained backbone. Built once.
struct DeskFixture {
  std::filesystem::path dir;
  cli::RunConfig config;
  DatasetIndex index;
  std::unique_ptr<BatchSource> data;
  std::unique_ptr<nn::Model> pretrained;
  std::filesystem::path pretrained_path;
  double pretrain_seconds = 0.0;
};

DeskFixture& desk_fixture(const std::filesystem::path& work_dir);

Outcome gradient_checks();                                                 // 2
Outcome oracle_equivalence();                                              // 3
Outcome transfer_contract(const std::filesystem::path& work_dir);          // 4
Outcome learnability(const std::filesystem::path& work_dir);               // 5
Outcome sweep_fidelity(const std::filesystem::path& work_dir);             // 6
Outcome metrics_properties();                                              // 7
Outcome face_detection(const std::filesystem::path& work_dir);             // 8
Outcome determinism_and_persistence(const std::filesystem::path& work_dir);  // 9
Outcome annotation_contract(const std::filesystem::path& work_dir);        // 10

}  // namespace maskdet::acceptance

#endif  // MASKDET_TESTS_ACCEPTANCE_CRITERIA_H_
