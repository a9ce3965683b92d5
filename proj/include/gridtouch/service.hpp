// Copyright 2026 The GridTouch Authors
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

// HTTP retouching service.
//
//   POST /retouch       {"image": base64 PNG | "path": file, "c": [4],
//                        "steps": 20, "seed": n, "extended": false,
//                        "session": id}
//                       -> {"session", "operations", "seed", "ms",
//                           "scores": {...}, "image": base64 PNG}
//   POST /feedback      {"session": id, "satisfied": bool}
//   GET  /session/{id}  {"session", "operations", "generates", "failure",
//                        "satisfied", "history": [{"c", "seed", "timestamp"}]}
//   GET  /score?path=p  score JSON, identical to `gridtouch score p`
//
// Handlers return {status, body} and never throw, so they can be tested
// without sockets.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gridtouch/attributes.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/diffusion.hpp"

namespace gridtouch {

inline constexpr std::size_t kMaxUploadBytes = 32u << 20;
inline constexpr int kMaxImageSide = 4096;
/// Generates beyond this count mark the session as a failure.
inline constexpr int kMaxOperations = 15;

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct SessionEvent {
  ConditionVector c;
  std::uint64_t seed;
  std::int64_t timestamp_ms;
};

struct Session {
  int generates = 0;
  std::optional<bool> satisfied;
  bool frozen = false;  // set by a satisfied feedback
  std::vector<SessionEvent> history;

  int operations() const { return std::min(generates, kMaxOperations); }
  bool failure() const { return generates > kMaxOperations; }
};

struct ServiceConfig {
  ScoreOptions scoring;
  int default_steps = 20;
  /// Optional JSONL file; every generate and feedback appends one record.
  std::optional<std::filesystem::path> session_log;
};

class RetouchService {
 public:
  RetouchService(std::optional<Model> model, ServiceConfig cfg = {});

  Response retouch(const std::string& body);
  Response feedback(const std::string& body);
  Response session(const std::string& id) const;
  Response score(const std::string& path) const;

  bool has_model() const { return model_.has_value(); }

 private:
  std::string open_session(const std::optional<std::string>& requested);
  void append_log(const std::string& line);

  std::optional<Model> model_;
  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::uint64_t next_session_ = 1;
};

/// Blocking HTTP front end over a RetouchService.
class HttpServer {
 public:
  explicit HttpServer(RetouchService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace gridtouch
