#include "op3d/external.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <csignal>
#include <cstring>
#include <map>
#include <mutex>
#include <thread>

#include <netdb.h>
#include <sodium.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "op3d/error.hpp"

namespace op3d {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminator
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t n = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &n, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw Error(Errc::ParseError, "invalid base64 payload");
  }
  out.resize(n);
  return out;
}

// --------------------------------------------------------------- codec ----

std::string encode_request(const MatchRequest& r) {
  const json j = {{"id", r.id},         {"mode", r.mode},     {"image_png_b64", r.image_png_b64},
                  {"prompts", r.prompts}, {"trials", r.trials}, {"seed", r.seed}};
  return j.dump();
}

namespace {

json parse_object(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ProtocolError, "parse error in line: " + std::string(line.substr(0, 200)));
  if (!j.is_object()) throw Error(Errc::ProtocolError, "expected a JSON object");
  return j;
}

std::uint64_t get_id(const json& j) {
  const auto it = j.find("id");
  if (it == j.end() || !it->is_number_unsigned()) {
    throw Error(Errc::ProtocolError, "missing or non-integer id");
  }
  return it->get<std::uint64_t>();
}

}  // namespace

MatchRequest parse_request(std::string_view line) {
  const json j = parse_object(line);
  try {
    MatchRequest r;
    r.id = get_id(j);
    r.mode = j.at("mode").get<std::string>();
    r.image_png_b64 = j.at("image_png_b64").get<std::string>();
    r.prompts = j.at("prompts").get<std::vector<std::string>>();
    r.trials = j.at("trials").get<std::uint32_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& ex) {
    throw Error(Errc::ProtocolError, std::string("bad request: ") + ex.what());
  }
}

std::string encode_response(const MatchResponse& r) {
  json j = {{"id", r.id}};
  if (r.error) j["error"] = *r.error;
  if (r.sq_err) j["sq_err"] = *r.sq_err;
  if (r.sim) j["sim"] = *r.sim;
  return j.dump();
}

MatchResponse parse_response(std::string_view line) {
  const json j = parse_object(line);
  MatchResponse r;
  r.id = get_id(j);
  try {
    if (const auto it = j.find("error"); it != j.end()) r.error = it->get<std::string>();
    if (const auto it = j.find("sq_err"); it != j.end()) {
      r.sq_err = it->get<std::vector<std::vector<double>>>();
    }
    if (const auto it = j.find("sim"); it != j.end()) r.sim = it->get<std::vector<double>>();
  } catch (const json::exception& ex) {
    throw Error(Errc::ProtocolError, "bad response payload for id " + std::to_string(r.id) + ": " + ex.what());
  }
  const int kinds = int(r.error.has_value()) + int(r.sq_err.has_value()) + int(r.sim.has_value());
  if (kinds != 1) {
    throw Error(Errc::ProtocolError,
                "response " + std::to_string(r.id) + " must carry exactly one of sq_err, sim, error");
  }
  return r;
}

Handshake parse_handshake(std::string_view line) {
  const json j = parse_object(line);
  const auto ready = j.find("ready");
  if (ready == j.end() || !ready->is_boolean() || !ready->get<bool>()) {
    throw Error(Errc::ProtocolError, "handshake without ready=true");
  }
  Handshake h;
  try {
    h.modes = j.at("modes").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw Error(Errc::ProtocolError, "handshake modes must be a list of strings");
  }
  if (h.modes.empty()) throw Error(Errc::ProtocolError, "handshake advertises no modes");
  h.raw = std::string(line);
  return h;
}

// ----------------------------------------------------------- transport ----

namespace {

int spawn_worker(const std::string& command, pid_t& child) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(Errc::MatcherUnavailable, std::string("socketpair: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw Error(Errc::MatcherUnavailable, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  child = pid;
  return sv[0];
}

int connect_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw Error(Errc::InvalidArgument, "endpoint must be host:port, got '" + endpoint + "'");
  }
  const std::string host = endpoint.substr(0, colon), port = endpoint.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(Errc::MatcherUnavailable, "cannot resolve " + endpoint + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  std::string last = "no address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::MatcherUnavailable, "cannot connect to " + endpoint + ": " + last);
  return fd;
}

}  // namespace

struct ExternalMatcher::Impl {
  ExternalOptions opts;
  int fd = -1;
  pid_t child = -1;
  std::thread reader;

  std::mutex mu;
  std::condition_variable cv;
  std::optional<Handshake> handshake;
  bool closed = false;
  std::string close_reason;
  std::map<std::uint64_t, std::optional<MatchResponse>> pending;

  std::mutex write_mu;
  std::atomic<std::uint64_t> next_id{1};
  std::string mode;
  MatcherFamily family = MatcherFamily::Diffusion;

  void mark_closed(const std::string& reason) {
    std::lock_guard lk(mu);
    if (!closed) {
      closed = true;
      close_reason = reason;
    }
    cv.notify_all();
  }

  void handle_line(std::string_view line) {
    bool have_handshake;
    {
      std::lock_guard lk(mu);
      have_handshake = handshake.has_value();
    }
    if (!have_handshake) {
      try {
        auto h = parse_handshake(line);
        std::lock_guard lk(mu);
        handshake = std::move(h);
        cv.notify_all();
      } catch (const Error& e) {
        mark_closed(std::string("invalid handshake: ") + e.what());
      }
      return;
    }
    MatchResponse r;
    try {
      r = parse_response(line);
    } catch (const Error& e) {
      // A response whose id is readable still resolves its request.
      try {
        const json j = json::parse(line);
        r.id = j.at("id").get<std::uint64_t>();
        r.error = e.what();
      } catch (const std::exception&) {
        return;  // unattributable; the request will time out
      }
    }
    std::lock_guard lk(mu);
    const auto it = pending.find(r.id);
    if (it != pending.end() && !it->second) {
      it->second = std::move(r);
      cv.notify_all();
    }
  }

  void read_loop() {
    std::string buf;
    char chunk[65536];
    for (;;) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        mark_closed(n == 0 ? "worker closed the stream" : std::string("recv: ") + std::strerror(errno));
        return;
      }
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (auto nl = buf.find('\n', start); nl != std::string::npos; nl = buf.find('\n', start)) {
        std::string_view line(buf.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) handle_line(line);
        start = nl + 1;
      }
      buf.erase(0, start);
    }
  }

  void send_line(const std::string& line) {
    std::lock_guard lk(write_mu);
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw Error(Errc::MatcherUnavailable, std::string("send: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  ~Impl() {
    if (fd >= 0) {
      ::shutdown(fd, SHUT_WR);
      {
        std::unique_lock lk(mu);
        cv.wait_for(lk, std::chrono::seconds(2), [&] { return closed; });
      }
      if (child > 0) ::kill(child, SIGTERM);
      ::shutdown(fd, SHUT_RDWR);
    }
    if (reader.joinable()) reader.join();
    if (fd >= 0) ::close(fd);
    if (child > 0) {
      int status = 0;
      for (int i = 0; i < 200; ++i) {
        if (::waitpid(child, &status, WNOHANG) != 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(child, SIGKILL);
      ::waitpid(child, &status, 0);
    }
  }
};

ExternalMatcher::ExternalMatcher(ExternalOptions opts) : impl_(std::make_unique<Impl>()) {
  if (opts.trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (sodium_init() < 0) throw Error(Errc::MatcherUnavailable, "libsodium initialization failed");
  impl_->opts = std::move(opts);
  auto& im = *impl_;
  if (!im.opts.command.empty()) {
    im.fd = spawn_worker(im.opts.command, im.child);
  } else if (!im.opts.endpoint.empty()) {
    im.fd = connect_endpoint(im.opts.endpoint);
  } else {
    throw Error(Errc::MatcherUnavailable, "no worker command or endpoint configured");
  }
  im.reader = std::thread([&im] { im.read_loop(); });

  std::unique_lock lk(im.mu);
  const bool done = im.cv.wait_for(lk, im.opts.handshake_timeout,
                                   [&] { return im.handshake.has_value() || im.closed; });
  if (!im.handshake) {
    throw Error(Errc::MatcherUnavailable,
                done ? "worker failed before handshake (" + im.close_reason + ")"
                     : "no handshake within " + std::to_string(im.opts.handshake_timeout.count()) + " ms");
  }
  const auto& modes = im.handshake->modes;
  const auto offered = [&](std::string_view m) {
    return std::find(modes.begin(), modes.end(), m) != modes.end();
  };
  if (im.opts.mode.empty()) {
    im.mode = offered("diffusion") ? "diffusion" : modes.front();
  } else if (offered(im.opts.mode)) {
    im.mode = im.opts.mode;
  } else {
    throw Error(Errc::MatcherUnavailable, "worker does not serve mode '" + im.opts.mode + "'");
  }
  if (im.mode == "diffusion") {
    im.family = MatcherFamily::Diffusion;
  } else if (im.mode == "similarity") {
    im.family = MatcherFamily::Similarity;
  } else {
    throw Error(Errc::MatcherUnavailable, "unsupported worker mode '" + im.mode + "'");
  }
}

ExternalMatcher::~ExternalMatcher() = default;

MatcherFamily ExternalMatcher::family() const { return impl_->family; }

const Handshake& ExternalMatcher::handshake() const { return *impl_->handshake; }

const std::string& ExternalMatcher::mode() const { return impl_->mode; }

std::string ExternalMatcher::describe() const {
  const auto& o = impl_->opts;
  return "external(" + (o.command.empty() ? "tcp " + o.endpoint : "cmd '" + o.command + "'") +
         ", mode=" + impl_->mode + ")";
}

std::vector<Evidence> ExternalMatcher::evaluate(const GrayImage& image, ProjectionStyle,
                                                std::span<const std::string> prompts,
                                                std::uint64_t seed) const {
  auto& im = *impl_;
  MatchRequest req;
  req.id = im.next_id++;
  req.mode = im.mode;
  req.image_png_b64 = base64_encode(encode_png(image));
  req.prompts.assign(prompts.begin(), prompts.end());
  req.trials = im.opts.trials;
  req.seed = seed;

  {
    std::lock_guard lk(im.mu);
    if (im.closed) throw Error(Errc::MatcherUnavailable, "worker connection closed: " + im.close_reason);
    im.pending.emplace(req.id, std::nullopt);
  }
  const auto forget = [&] {
    std::lock_guard lk(im.mu);
    im.pending.erase(req.id);
  };
  try {
    im.send_line(encode_request(req));
  } catch (...) {
    forget();
    throw;
  }

  MatchResponse resp;
  {
    std::unique_lock lk(im.mu);
    const bool ok = im.cv.wait_for(lk, im.opts.request_timeout, [&] {
      return im.pending.at(req.id).has_value() || im.closed;
    });
    auto& slot = im.pending.at(req.id);
    if (!slot) {
      im.pending.erase(req.id);
      throw Error(Errc::MatcherUnavailable,
                  ok ? "worker connection closed: " + im.close_reason
                     : "request " + std::to_string(req.id) + " timed out");
    }
    resp = std::move(*slot);
    im.pending.erase(req.id);
  }

  if (resp.error) throw Error(Errc::ProtocolError, "worker error: " + *resp.error);
  std::vector<Evidence> out;
  out.reserve(prompts.size());
  if (im.family == MatcherFamily::Diffusion) {
    if (!resp.sq_err || resp.sq_err->size() != prompts.size()) {
      throw Error(Errc::ProtocolError, "diffusion response needs one sq_err list per prompt");
    }
    for (auto& errs : *resp.sq_err) {
      if (errs.empty()) throw Error(Errc::ProtocolError, "empty sq_err list");
      out.push_back({MatcherFamily::Diffusion, std::move(errs), 0.0});
    }
  } else {
    if (!resp.sim || resp.sim->size() != prompts.size()) {
      throw Error(Errc::ProtocolError, "similarity response needs one value per prompt");
    }
    for (double s : *resp.sim) out.push_back({MatcherFamily::Similarity, {}, s});
  }
  return out;
}

}  // namespace op3d
