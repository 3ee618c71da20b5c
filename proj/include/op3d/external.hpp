#pragma once

// Client for out-of-process matchers speaking line-delimited JSON, either over
// a spawned worker's stdin/stdout or over a TCP connection.
//
//   worker -> {"ready": true, "modes": ["diffusion", ...]}        (once)
//   client -> {"id", "mode", "image_png_b64", "prompts", "trials", "seed"}
//   worker -> {"id", "sq_err": [[...], ...]} | {"id", "sim": [...]}
//           | {"id", "error": "..."}
//
// Requests are multiplexed by id; responses may arrive in any order.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "op3d/match.hpp"

namespace op3d {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct MatchRequest {
  std::uint64_t id = 0;
  std::string mode;
  std::string image_png_b64;
  std::vector<std::string> prompts;
  std::uint32_t trials = 30;
  std::uint64_t seed = 42;
};

struct MatchResponse {
  std::uint64_t id = 0;
  std::optional<std::vector<std::vector<double>>> sq_err;
  std::optional<std::vector<double>> sim;
  std::optional<std::string> error;
};

struct Handshake {
  std::vector<std::string> modes;
  std::string raw;  // the handshake line, kept for logging
};

// Single-line JSON without trailing newline.
std::string encode_request(const MatchRequest& r);
MatchRequest parse_request(std::string_view line);
std::string encode_response(const MatchResponse& r);
// ProtocolError on malformed input.
MatchResponse parse_response(std::string_view line);
Handshake parse_handshake(std::string_view line);

struct ExternalOptions {
  std::string command;   // run through /bin/sh -c
  std::string endpoint;  // host:port; used when command is empty
  std::string mode;      // empty: diffusion if offered, else the first advertised
  std::uint32_t trials = 30;
  std::chrono::milliseconds handshake_timeout{30000};
  std::chrono::milliseconds request_timeout{300000};
};

// Throws MatcherUnavailable when the worker cannot be started or reached, or
// no handshake arrives in time.
class ExternalMatcher final : public Matcher {
 public:
  explicit ExternalMatcher(ExternalOptions opts);
  ~ExternalMatcher() override;

  ExternalMatcher(const ExternalMatcher&) = delete;
  ExternalMatcher& operator=(const ExternalMatcher&) = delete;

  MatcherFamily family() const override;
  std::vector<Evidence> evaluate(const GrayImage& image, ProjectionStyle style,
                                 std::span<const std::string> prompts,
                                 std::uint64_t seed) const override;
  std::string describe() const override;

  const Handshake& handshake() const;
  const std::string& mode() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace op3d
