// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited JSON records on stderr.
#pragma once

#include <chrono>
#include <cstdio>
#include <string>

#include <nlohmann/json.hpp>

namespace lmdm::cli {

class Log {
 public:
  explicit Log(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void operator()(const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    nlohmann::json rec = {{"t", elapsed()}, {"cmd", command_}, {"event", event}};
    rec.update(fields);
    std::fprintf(stderr, "%s\n", rec.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace).c_str());
    std::fflush(stderr);
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace lmdm::cli
