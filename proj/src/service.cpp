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

#include "gridtouch/service.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "gridtouch/error.hpp"

namespace gridtouch {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

Response error(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Seeds stay below 2^53 so browsers can round-trip them as numbers.
std::uint64_t draw_seed() {
  static std::mutex mu;
  static std::random_device rd;
  std::lock_guard lock(mu);
  const std::uint64_t hi = rd(), lo = rd();
  return ((hi << 32) | lo) & ((std::uint64_t{1} << 53) - 1);
}

json condition_json(const ConditionVector& c) { return json::array({c[0], c[1], c[2], c[3]}); }

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) |
                            (i + 1 < bytes.size() ? std::uint32_t{bytes[i + 1]} << 8 : 0) |
                            (i + 2 < bytes.size() ? std::uint32_t{bytes[i + 2]} : 0);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char ch : text) {
    if (ch == '=') {
      ++pad;
      continue;
    }
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    const int v = lut[static_cast<unsigned char>(ch)];
    if (v < 0 || pad > 0) throw FormatError("invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  if (pad > 2) throw FormatError("invalid base64 padding");
  return out;
}

RetouchService::RetouchService(std::optional<Model> model, ServiceConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {}

std::string RetouchService::open_session(const std::optional<std::string>& requested) {
  if (requested) {
    sessions_.try_emplace(*requested);
    return *requested;
  }
  std::string id;
  do {
    id = "s" + std::to_string(next_session_++);
  } while (sessions_.contains(id));
  sessions_.emplace(id, Session{});
  return id;
}

void RetouchService::append_log(const std::string& line) {
  if (!cfg_.session_log) return;
  std::ofstream out(*cfg_.session_log, std::ios::app);
  if (out) out << line << '\n';
}

Response RetouchService::retouch(const std::string& body) {
  if (body.size() > kMaxUploadBytes) return error(413, "request exceeds 32 MiB");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "body is not valid JSON");
  }
  if (!req.is_object()) return error(400, "body must be a JSON object");

  ConditionVector c;
  int steps = cfg_.default_steps;
  bool extended = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> session_id;
  try {
    const auto cv = req.at("c").get<std::vector<double>>();
    if (cv.size() != 4) return error(400, "c must have 4 entries");
    c = ConditionVector(cv[0], cv[1], cv[2], cv[3]);
    steps = req.value("steps", steps);
    extended = req.value("extended", false);
    if (req.contains("seed") && !req.at("seed").is_null()) seed = req.at("seed").get<std::uint64_t>();
    if (req.contains("session") && !req.at("session").is_null()) {
      session_id = req.at("session").get<std::string>();
    }
  } catch (const json::exception& e) {
    return error(400, std::string("bad request field: ") + e.what());
  }
  const double c_max = extended ? kConditionMaxExtended : kConditionMax;
  if (!c.allFinite() || c.cwiseAbs().maxCoeff() > c_max) {
    return error(400, "every c_i must lie in [-" + std::to_string(static_cast<int>(c_max)) + ", " +
                          std::to_string(static_cast<int>(c_max)) + "]");
  }
  if (!model_) return error(503, "no model loaded");
  if (steps < 1 || steps > model_->schedule.steps()) {
    return error(400, "steps must lie in [1, " + std::to_string(model_->schedule.steps()) + "]");
  }

  Image input;
  try {
    if (req.contains("image")) {
      input = decode_png(base64_decode(req.at("image").get<std::string>()));
    } else if (req.contains("path")) {
      input = load_image(req.at("path").get<std::string>());
    } else {
      return error(400, "request needs an image or a path");
    }
  } catch (const IoError& e) {
    return error(404, e.what());
  } catch (const std::exception& e) {
    return error(400, std::string("cannot decode image: ") + e.what());
  }
  if (input.width > kMaxImageSide || input.height > kMaxImageSide) {
    return error(413, "images are limited to 4096 pixels per side");
  }
  if (input.channels != 3) input = [&] {
    Image rgb(input.width, input.height, 3);
    for (std::size_t i = 0; i < input.pixel_count(); ++i) {
      for (int ch = 0; ch < 3; ++ch) rgb.data[3 * i + ch] = input.data[i];
    }
    return rgb;
  }();

  const std::uint64_t used_seed = seed ? *seed : draw_seed();
  const auto t0 = std::chrono::steady_clock::now();
  Image out;
  try {
    out = sample(input, c, *model_, {steps, used_seed, false}).image;
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const std::vector<std::uint8_t> png = encode_png(out);

  ordered_json scores;
  try {
    scores = ordered_json::parse(score_json(score_vector(out, cfg_.scoring)));
  } catch (const DomainError&) {
    scores = nullptr;  // e.g. an all-black output has no colour temperature
  }

  std::string id;
  int operations = 0;
  {
    std::lock_guard lock(mu_);
    id = open_session(session_id);
    Session& s = sessions_[id];
    if (!s.frozen) {
      ++s.generates;
      s.history.push_back({c, used_seed, now_ms()});
      append_log(json{{"event", "generate"}, {"session", id}, {"c", condition_json(c)}, {"seed", used_seed},
                      {"timestamp", s.history.back().timestamp_ms}}
                     .dump());
    }
    operations = s.operations();
  }

  ordered_json res;
  res["session"] = id;
  res["operations"] = operations;
  res["seed"] = used_seed;
  res["ms"] = ms;
  res["scores"] = scores;
  res["image"] = base64_encode(png);
  return {200, res.dump()};
}

Response RetouchService::feedback(const std::string& body) {
  json req;
  std::string id;
  bool satisfied = false;
  try {
    req = json::parse(body);
    id = req.at("session").get<std::string>();
    satisfied = req.at("satisfied").get<bool>();
  } catch (const json::exception& e) {
    return error(400, std::string("feedback needs session and satisfied: ") + e.what());
  }
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session '" + id + "'");
  Session& s = it->second;
  if (!s.frozen) {
    s.satisfied = satisfied;
    if (satisfied) s.frozen = true;
    append_log(json{{"event", "feedback"}, {"session", id}, {"satisfied", satisfied}, {"timestamp", now_ms()}}.dump());
  }
  ordered_json res;
  res["session"] = id;
  res["operations"] = s.operations();
  res["failure"] = s.failure();
  res["satisfied"] = s.satisfied ? json(*s.satisfied) : json(nullptr);
  return {200, res.dump()};
}

Response RetouchService::session(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session '" + id + "'");
  const Session& s = it->second;
  ordered_json res;
  res["session"] = id;
  res["operations"] = s.operations();
  res["generates"] = s.generates;
  res["failure"] = s.failure();
  res["satisfied"] = s.satisfied ? json(*s.satisfied) : json(nullptr);
  json history = json::array();
  for (const SessionEvent& e : s.history) {
    history.push_back({{"c", condition_json(e.c)}, {"seed", e.seed}, {"timestamp", e.timestamp_ms}});
  }
  res["history"] = history;
  return {200, res.dump()};
}

Response RetouchService::score(const std::string& path) const {
  if (path.empty()) return error(400, "missing path parameter");
  try {
    return {200, score_json(score_vector(load_image(path), cfg_.scoring))};
  } catch (const IoError& e) {
    return error(404, e.what());
  } catch (const DomainError& e) {
    return error(422, e.what());
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(RetouchService& service) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.set_payload_max_length(kMaxUploadBytes);
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Post("/retouch", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.retouch(req.body));
  });
  srv.Post("/feedback", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.feedback(req.body));
  });
  srv.Get(R"(/session/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.session(req.matches[1]));
  });
  srv.Get("/score", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.score(req.get_param_value("path")));
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace gridtouch
