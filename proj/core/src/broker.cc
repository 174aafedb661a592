#include "sealedrules/broker.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "json.hpp"
#include "sealedrules/error.h"

namespace sealedrules {

using ojson = nlohmann::ordered_json;

namespace {

bool IsNameSegment(std::string_view s) {
  if (s.empty() || s.size() > 128) return false;
  return s.find_first_of("/+#$") == std::string_view::npos;
}

bool WriteFull(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool ReadFull(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// Reads one length-prefixed frame; returns the wire bytes (prefix included).
std::optional<Bytes> ReadWireFrame(int fd) {
  Bytes wire(4);
  if (!ReadFull(fd, wire.data(), 4)) return std::nullopt;
  const std::uint32_t len = ReadU32BE(wire);
  if (len > kMaxFrameSize) return std::nullopt;
  wire.resize(4 + len);
  if (!ReadFull(fd, wire.data() + 4, len)) return std::nullopt;
  return wire;
}

std::string_view Body(const Bytes& wire) {
  return {reinterpret_cast<const char*>(wire.data()) + 4, wire.size() - 4};
}

void SetNoDelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

bool IsValidTopic(std::string_view topic) {
  if (topic == "prov/rules") return true;
  for (std::string_view prefix : {"evt/", "cmd/", "attest/"}) {
    if (topic.substr(0, prefix.size()) == prefix) {
      return IsNameSegment(topic.substr(prefix.size()));
    }
  }
  return false;
}

bool IsValidPattern(std::string_view pattern) {
  return pattern == "evt/+" || pattern == "cmd/+" || IsValidTopic(pattern);
}

bool TopicMatches(std::string_view pattern, std::string_view topic) {
  if (pattern == "evt/+" || pattern == "cmd/+") {
    const std::string_view prefix = pattern.substr(0, 4);
    return topic.substr(0, 4) == prefix && IsNameSegment(topic.substr(4));
  }
  return pattern == topic;
}

Bytes EncodeFrame(const Frame& frame) {
  ojson j;
  j["topic"] = frame.topic;
  j["seq"] = frame.seq;
  j["payload_b64"] = Base64Encode(frame.payload);
  const std::string body = j.dump();
  Bytes out;
  out.reserve(4 + body.size());
  AppendU32BE(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Frame DecodeFrameBody(std::string_view body) {
  ojson j;
  try {
    j = ojson::parse(body);
  } catch (const ojson::parse_error& e) {
    throw SyntaxError(std::string("frame: ") + e.what());
  }
  if (!j.is_object() || !j.contains("topic") || !j["topic"].is_string() ||
      !j.contains("seq") || !j["seq"].is_number_unsigned() ||
      !j.contains("payload_b64") || !j["payload_b64"].is_string()) {
    throw SyntaxError("frame: missing or ill-typed field");
  }
  return Frame{j["topic"].get<std::string>(), j["seq"].get<std::uint64_t>(),
               Base64Decode(j["payload_b64"].get<std::string>())};
}

// ---------------------------------------------------------------------------
// Broker

struct Broker::Connection {
  int fd = -1;
  std::thread reader;
  std::thread writer;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> outbound;
  bool closed = false;
  std::vector<std::string> patterns;
  std::uint64_t last_client_seq = 0;
  std::uint64_t delivery_seq = 0;
};

Broker::Broker(BrokerOptions options) : options_(std::move(options)) {}

Broker::~Broker() { Stop(); }

void Broker::Start() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(options_.port);
  if (::getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &res) != 0) {
    throw BindError("cannot resolve '" + options_.host + "'");
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (fd < 0 || ::bind(fd, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(fd, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    throw BindError("cannot listen on " + options_.host + ":" + port + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  {
    std::lock_guard lock(mu_);
    running_ = true;
  }
  accept_thread_ = std::thread([this] { AcceptLoop(); });
}

void Broker::Stop() {
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    if (!running_) return;
    running_ = false;
    conns.swap(connections_);
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  for (auto& c : conns) {
    {
      std::lock_guard lock(c->mu);
      c->closed = true;
    }
    c->cv.notify_all();
    ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

void Broker::SetCapture(Capture capture) {
  std::lock_guard lock(capture_mu_);
  capture_ = std::move(capture);
}

void Broker::Captured(ByteView wire) {
  std::lock_guard lock(capture_mu_);
  if (capture_) capture_(wire);
}

BrokerStats Broker::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Broker::AcceptLoop() {
  for (;;) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 200);
    std::vector<std::shared_ptr<Connection>> dead;
    {
      std::lock_guard lock(mu_);
      if (!running_) return;
      for (auto it = connections_.begin(); it != connections_.end();) {
        std::lock_guard cl((*it)->mu);
        if ((*it)->closed) {
          dead.push_back(*it);
          it = connections_.erase(it);
        } else {
          ++it;
        }
      }
    }
    // Reap connections whose peer went away.
    for (auto& c : dead) {
      c->cv.notify_all();
      ::shutdown(c->fd, SHUT_RDWR);
      if (c->reader.joinable()) c->reader.join();
      if (c->writer.joinable()) c->writer.join();
      ::close(c->fd);
    }
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      std::lock_guard lock(mu_);
      if (!running_) return;
      continue;
    }
    SetNoDelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    conn->writer = std::thread([this, conn] {
      for (;;) {
        Bytes wire;
        {
          std::unique_lock lock(conn->mu);
          conn->cv.wait(lock, [&] { return conn->closed || !conn->outbound.empty(); });
          if (conn->outbound.empty()) return;
          wire = std::move(conn->outbound.front());
          conn->outbound.pop_front();
        }
        conn->cv.notify_all();
        Captured(wire);
        if (!WriteFull(conn->fd, wire.data(), wire.size())) {
          std::lock_guard lock(conn->mu);
          conn->closed = true;
          conn->cv.notify_all();
          return;
        }
      }
    });
    conn->reader = std::thread([this, conn] { ReadLoop(conn); });
    std::lock_guard lock(mu_);
    connections_.push_back(conn);
    ++stats_.connections;
  }
}

void Broker::ReadLoop(std::shared_ptr<Connection> conn) {
  for (;;) {
    std::optional<Bytes> wire = ReadWireFrame(conn->fd);
    if (!wire) break;
    Captured(*wire);
    Frame frame;
    try {
      frame = DecodeFrameBody(Body(*wire));
    } catch (const Error&) {
      break;  // protocol violation: drop the connection
    }
    HandleFrame(conn, std::move(frame));
  }
  {
    std::lock_guard lock(conn->mu);
    conn->closed = true;
  }
  conn->cv.notify_all();
}

bool Broker::Enqueue(const std::shared_ptr<Connection>& conn, Frame frame) {
  std::unique_lock lock(conn->mu);
  const bool has_room = conn->cv.wait_for(lock, options_.backpressure_timeout, [&] {
    return conn->closed || conn->outbound.size() < options_.queue_capacity;
  });
  if (conn->closed) return true;  // nothing to deliver to
  if (!has_room) return false;
  if (frame.topic != kAckTopic) frame.seq = ++conn->delivery_seq;
  conn->outbound.push_back(EncodeFrame(frame));
  lock.unlock();
  conn->cv.notify_all();
  return true;
}

void Broker::Reply(const std::shared_ptr<Connection>& conn, std::uint64_t seq,
                   std::string_view error) {
  // Acks bypass the capacity bound so a publisher is never starved of its
  // own answers.
  std::lock_guard lock(conn->mu);
  if (conn->closed) return;
  conn->outbound.push_back(EncodeFrame(Frame{std::string(kAckTopic), seq, ToBytes(error)}));
  conn->cv.notify_all();
}

void Broker::HandleFrame(const std::shared_ptr<Connection>& conn, Frame frame) {
  {
    std::lock_guard lock(conn->mu);
    if (frame.seq <= conn->last_client_seq) {
      // Redelivery of something already handled: acknowledge only.
      conn->outbound.push_back(
          EncodeFrame(Frame{std::string(kAckTopic), frame.seq, {}}));
      conn->cv.notify_all();
      return;
    }
    conn->last_client_seq = frame.seq;
  }

  if (frame.topic == kSubscribeTopic) {
    const std::string pattern = ToString(frame.payload);
    if (!IsValidPattern(pattern)) {
      Reply(conn, frame.seq, "PatternInvalid");
      return;
    }
    {
      std::lock_guard lock(conn->mu);
      if (std::find(conn->patterns.begin(), conn->patterns.end(), pattern) ==
          conn->patterns.end()) {
        conn->patterns.push_back(pattern);
      }
    }
    Reply(conn, frame.seq, "");
    return;
  }

  if (!IsValidTopic(frame.topic) || frame.payload.size() > kMaxPayloadSize) {
    Reply(conn, frame.seq, "TopicInvalid");
    return;
  }

  std::vector<std::shared_ptr<Connection>> targets;
  {
    std::lock_guard lock(mu_);
    ++stats_.published;
    for (const auto& c : connections_) {
      std::lock_guard cl(c->mu);
      if (c->closed) continue;
      for (const std::string& p : c->patterns) {
        if (TopicMatches(p, frame.topic)) {
          targets.push_back(c);
          break;
        }
      }
    }
    if (targets.empty()) ++stats_.dropped_no_subscriber;
  }

  bool ok = true;
  const std::uint64_t client_seq = frame.seq;
  for (const auto& target : targets) {
    if (Enqueue(target, frame)) {
      std::lock_guard lock(mu_);
      ++stats_.delivered;
    } else {
      ok = false;
    }
  }
  if (!ok) {
    std::lock_guard lock(mu_);
    ++stats_.backpressure;
  }
  Reply(conn, client_seq, ok ? "" : "Backpressure");
}

// ---------------------------------------------------------------------------
// BrokerClient

BrokerClient::BrokerClient(int fd) : fd_(fd) {
  reader_ = std::thread([this] { ReadLoop(); });
}

BrokerClient::~BrokerClient() {
  Close();
  if (reader_.joinable()) reader_.join();
  ::close(fd_);
}

std::unique_ptr<BrokerClient> BrokerClient::Connect(
    const std::string& host, std::uint16_t port,
    std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0) {
    throw BrokerUnreachable("cannot resolve '" + host + "'");
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      SetNoDelay(fd);
      return std::unique_ptr<BrokerClient>(new BrokerClient(fd));
    }
    if (fd >= 0) ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ::freeaddrinfo(res);
  throw BrokerUnreachable("cannot connect to " + host + ":" + port_str);
}

void BrokerClient::ReadLoop() {
  for (;;) {
    std::optional<Bytes> wire = ReadWireFrame(fd_);
    if (!wire) break;
    Frame frame;
    try {
      frame = DecodeFrameBody(Body(*wire));
    } catch (const Error&) {
      break;
    }
    std::lock_guard lock(mu_);
    if (frame.topic == kAckTopic) {
      acks_[frame.seq] = ToString(frame.payload);
    } else if (frame.seq > last_delivery_seq_) {
      last_delivery_seq_ = frame.seq;
      inbox_.push_back(std::move(frame));
    }
    cv_.notify_all();
  }
  std::lock_guard lock(mu_);
  open_ = false;
  cv_.notify_all();
}

std::uint64_t BrokerClient::SendAndWait(std::string_view topic, ByteView payload) {
  std::uint64_t seq;
  {
    std::lock_guard wl(write_mu_);
    {
      std::lock_guard lock(mu_);
      if (!open_) throw NotConnected("broker connection is closed");
      seq = next_seq_++;
    }
    const Bytes wire = EncodeFrame(Frame{std::string(topic), seq, Bytes(payload.begin(), payload.end())});
    if (!WriteFull(fd_, wire.data(), wire.size())) {
      throw NotConnected("broker connection lost");
    }
  }
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, ack_timeout_,
                    [&] { return acks_.count(seq) != 0 || !open_; })) {
    throw TimeoutError("no ack from broker");
  }
  auto it = acks_.find(seq);
  if (it == acks_.end()) throw NotConnected("broker connection closed before ack");
  const std::string error = it->second;
  acks_.erase(it);
  if (error == "TopicInvalid") throw TopicInvalid("broker rejected topic '" + std::string(topic) + "'");
  if (error == "PatternInvalid") throw PatternInvalid("broker rejected pattern");
  if (error == "Backpressure") throw Backpressure("subscriber queue full");
  return seq;
}

std::uint64_t BrokerClient::Publish(std::string_view topic, ByteView payload) {
  if (!IsValidTopic(topic)) throw TopicInvalid("invalid topic '" + std::string(topic) + "'");
  if (payload.size() > kMaxPayloadSize) throw TopicInvalid("payload exceeds 1 MiB");
  return SendAndWait(topic, payload);
}

void BrokerClient::Subscribe(std::string_view pattern) {
  if (!IsValidPattern(pattern)) {
    throw PatternInvalid("invalid pattern '" + std::string(pattern) + "'");
  }
  SendAndWait(kSubscribeTopic, AsBytes(pattern));
}

std::optional<Frame> BrokerClient::Receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || !open_; });
  if (inbox_.empty()) return std::nullopt;
  Frame f = std::move(inbox_.front());
  inbox_.pop_front();
  return f;
}

bool BrokerClient::connected() const {
  std::lock_guard lock(mu_);
  return open_;
}

void BrokerClient::Close() {
  ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace sealedrules
