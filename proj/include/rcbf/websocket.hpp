#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rcbf {

struct ChannelMessage {
  bool binary = false;
  std::string data;
};

/// Full-duplex message pipe carrying UTF-8 text and binary messages.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual bool send_text(std::string_view text) = 0;
  virtual bool send_binary(std::span<const uint8_t> bytes) = 0;
  /// nullopt on timeout or once the channel is closed.
  virtual std::optional<ChannelMessage> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;
};

/// Two connected in-process endpoints.
std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_memory_channel_pair();

namespace ws {

enum class Opcode : uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::Text;
  std::vector<uint8_t> payload;
};

/// Sec-WebSocket-Accept value for a client key.
std::string accept_key(std::string_view client_key);

/// Serialized frame; clients must mask, servers must not.
std::vector<uint8_t> encode_frame(Opcode op, std::span<const uint8_t> payload, bool fin = true,
                                  std::optional<uint32_t> mask = std::nullopt);

/// Incremental frame decoder. Throws std::runtime_error on protocol violations.
class FrameParser {
 public:
  explicit FrameParser(std::size_t max_payload = std::size_t{64} << 20) : max_payload_(max_payload) {}
  void feed(std::span<const uint8_t> bytes);
  std::optional<Frame> next();

 private:
  std::vector<uint8_t> buffer_;
  std::size_t max_payload_;
};

struct HandshakeRequest {
  std::string path;
  std::string key;
};

/// Parses an HTTP upgrade request; nullopt if `raw` is not a valid websocket upgrade.
std::optional<HandshakeRequest> parse_upgrade_request(std::string_view raw);
std::string upgrade_response(std::string_view client_key);

}  // namespace ws

class WebSocketListener;
class WebSocketChannel;
std::shared_ptr<WebSocketChannel> websocket_connect(const std::string& host, uint16_t port, const std::string& path);

/// Websocket endpoint over a connected TCP socket.
class WebSocketChannel : public Channel {
 public:
  /// Takes ownership of `fd`. `client` endpoints mask outgoing frames.
  WebSocketChannel(int fd, bool client);
  ~WebSocketChannel() override;

  bool send_text(std::string_view text) override;
  bool send_binary(std::span<const uint8_t> bytes) override;
  std::optional<ChannelMessage> receive(std::chrono::milliseconds timeout) override;
  void close() override;
  bool is_open() const override;

 private:
  friend std::shared_ptr<WebSocketChannel> websocket_connect(const std::string&, uint16_t, const std::string&);
  friend class WebSocketListener;
  bool send_frame(ws::Opcode op, std::span<const uint8_t> payload);

  int fd_;
  bool client_;
  mutable std::mutex send_mutex_;
  mutable std::mutex state_mutex_;
  bool open_ = true;
  ws::FrameParser parser_;
  std::vector<uint8_t> partial_;
  std::optional<ws::Opcode> partial_op_;
  uint32_t mask_state_ = 0x9e3779b9u;
};

/// Connects and performs the client handshake. Throws std::runtime_error on failure.
std::shared_ptr<WebSocketChannel> websocket_connect(const std::string& host, uint16_t port,
                                                    const std::string& path = "/");

/// Accepts TCP connections and upgrades them to websockets.
class WebSocketListener {
 public:
  /// Port 0 picks an ephemeral port. Throws std::runtime_error on bind failure.
  WebSocketListener(const std::string& host, uint16_t port);
  ~WebSocketListener();

  uint16_t port() const { return port_; }
  /// Waits up to `timeout` for a client and completes the handshake. Non-websocket requests
  /// are answered with HTTP 400 and skipped.
  std::shared_ptr<WebSocketChannel> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

}  // namespace rcbf
