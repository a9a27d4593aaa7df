// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lmdm/config.hpp"
#include "log.hpp"

namespace lmdm::cli {

struct TrainOptions {
  bool resume = false;
  int save_every = 0;
};

struct PosttrainOptions {
  int probe_every = 50;
  int probe_seeds = 8;
  int drift_seeds = 32;
};

struct SampleOptions {
  std::string checkpoint;
  std::string output;
  std::string transition;  // "a,b[,begin,length]"
};

struct VerifyOptions {
  bool fast = false;
  int seeds = 20;
  std::vector<int> only;
};

int cmd_gen_data(const RunConfig& cfg, const Log& log);
int cmd_train(const RunConfig& cfg, const TrainOptions& opts, const Log& log);
int cmd_posttrain(const RunConfig& cfg, const PosttrainOptions& opts, const Log& log);
int cmd_sample(RunConfig cfg, const SampleOptions& opts, const Log& log);
int cmd_bench(const RunConfig& cfg, const Log& log);
int cmd_verify(const RunConfig& cfg, const VerifyOptions& opts, const Log& log);

}  // namespace lmdm::cli
