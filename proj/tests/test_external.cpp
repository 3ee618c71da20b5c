#include <cstdio>
#include <future>
#include <thread>

#include "doctest.h"
#include "op3d/error.hpp"
#include "op3d/external.hpp"
#include "op3d/iarm.hpp"

using namespace op3d;
using namespace std::chrono_literals;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected op3d::Error");
  return Errc::InvalidArgument;
}

ExternalOptions worker(const std::string& mode) {
  ExternalOptions o;
  o.command = std::string(FAKE_WORKER) + " " + mode;
  o.trials = 4;
  o.handshake_timeout = 5000ms;
  o.request_timeout = 5000ms;
  return o;
}

const GrayImage kImage(8, 8, 0.5f);

}  // namespace

TEST_CASE("base64") {
  const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253};
  CHECK(base64_encode(bytes) == "AAEC+vv8/Q==");
  CHECK(base64_decode("AAEC+vv8/Q==") == bytes);
  CHECK(base64_encode({}) == "");
  CHECK_THROWS_AS(base64_decode("!!!"), Error);
}

TEST_CASE("codec round trips") {
  MatchRequest req{7, "diffusion", "AAAA", {"one line-drawn cube", "x"}, 30, 123456789012345ULL};
  const auto line = encode_request(req);
  CHECK(line.find('\n') == std::string::npos);
  const auto back = parse_request(line);
  CHECK(back.id == 7);
  CHECK(back.prompts == req.prompts);
  CHECK(back.seed == req.seed);

  MatchResponse r;
  r.id = 9;
  r.sq_err = std::vector<std::vector<double>>{{0.5, 0.25}, {1.0}};
  const auto rr = parse_response(encode_response(r));
  CHECK(rr.id == 9);
  CHECK(rr.sq_err == r.sq_err);
  CHECK_FALSE(rr.sim);

  CHECK(parse_response(R"({"id": 3, "error": "bad"})").error == std::optional<std::string>("bad"));
  CHECK(code_of([] { parse_response(R"({"id": 3})"); }) == Errc::ProtocolError);
  CHECK(code_of([] { parse_response(R"({"id": 3, "sim": [1], "error": "x"})"); }) ==
        Errc::ProtocolError);
  CHECK(code_of([] { parse_response(R"({"sim": [1]})"); }) == Errc::ProtocolError);
  CHECK(code_of([] { parse_response("not json"); }) == Errc::ProtocolError);

  CHECK(parse_handshake(R"({"ready": true, "modes": ["similarity"]})").modes ==
        std::vector<std::string>{"similarity"});
  CHECK(code_of([] { parse_handshake(R"({"ready": false, "modes": ["x"]})"); }) ==
        Errc::ProtocolError);
  CHECK(code_of([] { parse_handshake(R"({"ready": true, "modes": []})"); }) == Errc::ProtocolError);
}

TEST_CASE("subprocess echo worker") {
  ExternalMatcher m(worker("echo"));
  CHECK(m.mode() == "diffusion");
  CHECK(m.family() == MatcherFamily::Diffusion);
  CHECK(m.handshake().modes.size() == 2);
  const std::vector<std::string> prompts{"a", "b", "c"};
  const auto ev = m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1);
  REQUIRE(ev.size() == 3);
  for (const auto& e : ev) {
    CHECK(e.errors.size() == 4);
    CHECK(evidence_score(e).value() == 1.0);
  }
  // Ties go to class 0.
  std::vector<MatchScore> s;
  for (const auto& e : ev) s.push_back(evidence_score(e));
  const auto p = class_probabilities(s);
  CHECK(argmax_lowest(p) == 0);
}

TEST_CASE("responses are matched by id") {
  ExternalMatcher m(worker("reorder"));
  const std::vector<std::string> short_p{"ab"};
  const std::vector<std::string> long_p{"abcdefghij"};
  auto a = std::async(std::launch::async, [&] { return m.evaluate(kImage, ProjectionStyle::Depth, short_p, 1); });
  auto b = std::async(std::launch::async, [&] { return m.evaluate(kImage, ProjectionStyle::Depth, long_p, 2); });
  CHECK(a.get()[0].errors[0] == doctest::Approx(0.02));
  CHECK(b.get()[0].errors[0] == doctest::Approx(0.10));
}

TEST_CASE("similarity mode") {
  auto opts = worker("similarity");
  ExternalMatcher m(opts);
  CHECK(m.mode() == "similarity");
  const std::vector<std::string> prompts{"a", "b"};
  const auto ev = m.evaluate(kImage, ProjectionStyle::Edge, prompts, 1);
  CHECK(evidence_score(ev[0]).value() == 1.0);
  CHECK(evidence_score(ev[1]).exponent() == doctest::Approx(100.0));

  opts.mode = "diffusion";
  CHECK(code_of([&] { ExternalMatcher bad(opts); }) == Errc::MatcherUnavailable);
}

TEST_CASE("worker failures map to error codes") {
  const std::vector<std::string> prompts{"a"};
  {
    ExternalMatcher m(worker("error"));
    CHECK(code_of([&] { m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1); }) == Errc::ProtocolError);
    // The stream survives an error record.
    CHECK(code_of([&] { m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1); }) == Errc::ProtocolError);
  }
  {
    ExternalMatcher m(worker("garbled"));
    CHECK(code_of([&] { m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1); }) == Errc::ProtocolError);
  }
  {
    ExternalMatcher m(worker("crash"));
    CHECK(code_of([&] { m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1); }) ==
          Errc::MatcherUnavailable);
    CHECK(code_of([&] { m.evaluate(kImage, ProjectionStyle::Depth, prompts, 1); }) ==
          Errc::MatcherUnavailable);
  }
  auto silent = worker("silent");
  silent.handshake_timeout = 300ms;
  CHECK(code_of([&] { ExternalMatcher m(silent); }) == Errc::MatcherUnavailable);
  CHECK(code_of([] {
          ExternalOptions o;
          o.command = "/nonexistent/worker-binary";
          o.handshake_timeout = 2000ms;
          ExternalMatcher m(o);
        }) == Errc::MatcherUnavailable);
  CHECK(code_of([] { ExternalMatcher m(ExternalOptions{}); }) == Errc::MatcherUnavailable);
}

TEST_CASE("TCP endpoint") {
  FILE* p = ::popen((std::string(FAKE_WORKER) + " lengths --listen").c_str(), "r");
  REQUIRE(p);
  char buf[32] = {};
  REQUIRE(std::fgets(buf, sizeof buf, p));
  const int port = std::atoi(buf);
  REQUIRE(port > 0);
  {
    ExternalOptions o;
    o.endpoint = "127.0.0.1:" + std::to_string(port);
    o.trials = 2;
    o.handshake_timeout = 5000ms;
    ExternalMatcher m(o);
    const std::vector<std::string> prompts{"abcd"};
    const auto ev = m.evaluate(kImage, ProjectionStyle::Depth, prompts, 5);
    CHECK(ev[0].errors == std::vector<double>{0.04, 0.04});
    CHECK(m.describe().find("tcp") != std::string::npos);
  }
  ::pclose(p);

  ExternalOptions o;
  o.endpoint = "127.0.0.1:1";
  CHECK(code_of([&] { ExternalMatcher m(o); }) == Errc::MatcherUnavailable);
  o.endpoint = "no-port";
  CHECK(code_of([&] { ExternalMatcher m(o); }) == Errc::InvalidArgument);
}
