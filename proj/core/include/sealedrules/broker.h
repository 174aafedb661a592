#ifndef SEALEDRULES_BROKER_H_
#define SEALEDRULES_BROKER_H_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sealedrules/bytes.h"

namespace sealedrules {

// Topics: evt/<device>, cmd/<device>, prov/rules, attest/<enclave_id>.
bool IsValidTopic(std::string_view topic);
// An exact valid topic, or one of the wildcards evt/+ and cmd/+.
bool IsValidPattern(std::string_view pattern);
bool TopicMatches(std::string_view pattern, std::string_view topic);

inline constexpr std::size_t kMaxPayloadSize = 1 << 20;
inline constexpr std::size_t kMaxFrameSize = 2 << 20;

// Reserved control topics. Clients subscribe by publishing the pattern on
// $ctl/subscribe; the broker answers every client frame with $ctl/ack whose
// seq echoes the client's seq and whose payload is empty on success or the
// error name (TopicInvalid, PatternInvalid, Backpressure).
inline constexpr std::string_view kSubscribeTopic = "$ctl/subscribe";
inline constexpr std::string_view kAckTopic = "$ctl/ack";

struct Frame {
  std::string topic;
  std::uint64_t seq = 0;
  Bytes payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

// 4-byte big-endian length || UTF-8 JSON {"topic":..,"seq":..,"payload_b64":..}
Bytes EncodeFrame(const Frame& frame);
// Decodes the JSON body (without the length prefix). Throws SyntaxError.
Frame DecodeFrameBody(std::string_view body);

struct BrokerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::size_t queue_capacity = 4096;
  std::chrono::milliseconds backpressure_timeout{2000};
};

struct BrokerStats {
  std::uint64_t published = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_no_subscriber = 0;
  std::uint64_t backpressure = 0;
  std::uint64_t connections = 0;
};

// In-repo publish/subscribe broker. No retained messages, no persistence.
// Each connection has a reader thread and a writer thread draining a bounded
// outbound queue; a full subscriber queue stalls the publisher up to
// backpressure_timeout, after which the publish is answered Backpressure.
class Broker {
 public:
  explicit Broker(BrokerOptions options = {});
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  // Throws BindError when the address is unavailable.
  void Start();
  void Stop();
  std::uint16_t port() const noexcept { return port_; }
  const std::string& host() const noexcept { return options_.host; }

  // Every frame written or read by the broker, as raw wire bytes.
  using Capture = std::function<void(ByteView wire)>;
  void SetCapture(Capture capture);

  BrokerStats stats() const;

 private:
  struct Connection;
  void AcceptLoop();
  void ReadLoop(std::shared_ptr<Connection> conn);
  void HandleFrame(const std::shared_ptr<Connection>& conn, Frame frame);
  bool Enqueue(const std::shared_ptr<Connection>& conn, Frame frame);
  void Reply(const std::shared_ptr<Connection>& conn, std::uint64_t seq,
             std::string_view error);
  void Captured(ByteView wire);

  BrokerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
  bool running_ = false;
  std::mutex capture_mu_;
  Capture capture_;
  BrokerStats stats_;
};

// Blocking client for one broker connection. Publish and Subscribe wait for
// the broker's ack; deliveries are queued and read with Receive().
class BrokerClient {
 public:
  // Throws BrokerUnreachable.
  static std::unique_ptr<BrokerClient> Connect(
      const std::string& host, std::uint16_t port,
      std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  ~BrokerClient();
  BrokerClient(const BrokerClient&) = delete;
  BrokerClient& operator=(const BrokerClient&) = delete;

  // Returns the sequence number acknowledged by the broker. Throws
  // NotConnected, TopicInvalid, Backpressure or TimeoutError.
  std::uint64_t Publish(std::string_view topic, ByteView payload);
  // Throws NotConnected, PatternInvalid or TimeoutError.
  void Subscribe(std::string_view pattern);
  // Next delivered frame, or nullopt on timeout / closed connection.
  std::optional<Frame> Receive(std::chrono::milliseconds timeout);

  bool connected() const;
  void Close();

 private:
  explicit BrokerClient(int fd);
  std::uint64_t SendAndWait(std::string_view topic, ByteView payload);
  void ReadLoop();

  int fd_;
  std::thread reader_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::mutex write_mu_;
  std::uint64_t next_seq_ = 1;
  std::map<std::uint64_t, std::string> acks_;
  std::deque<Frame> inbox_;
  std::uint64_t last_delivery_seq_ = 0;
  bool open_ = true;
  std::chrono::milliseconds ack_timeout_{5000};
};

}  // namespace sealedrules

#endif  // SEALEDRULES_BROKER_H_
