#include "rcbf/websocket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <random>
#include <stdexcept>

namespace rcbf {

// ---------------------------------------------------------------------------
// In-memory channel pair

namespace {

struct MemoryPipe {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<ChannelMessage> queue[2];
  bool closed = false;
};

class MemoryChannel : public Channel {
 public:
  MemoryChannel(std::shared_ptr<MemoryPipe> pipe, int side) : pipe_(std::move(pipe)), side_(side) {}
  ~MemoryChannel() override { close(); }

  bool send_text(std::string_view text) override { return push({false, std::string(text)}); }
  bool send_binary(std::span<const uint8_t> bytes) override {
    return push({true, std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size())});
  }
  std::optional<ChannelMessage> receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(pipe_->mutex);
    auto& q = pipe_->queue[side_];
    pipe_->cv.wait_for(lock, timeout, [&] { return !q.empty() || pipe_->closed; });
    if (q.empty()) return std::nullopt;
    ChannelMessage m = std::move(q.front());
    q.pop_front();
    return m;
  }
  void close() override {
    {
      std::lock_guard lock(pipe_->mutex);
      pipe_->closed = true;
    }
    pipe_->cv.notify_all();
  }
  bool is_open() const override {
    std::lock_guard lock(pipe_->mutex);
    return !pipe_->closed;
  }

 private:
  bool push(ChannelMessage m) {
    {
      std::lock_guard lock(pipe_->mutex);
      if (pipe_->closed) return false;
      pipe_->queue[1 - side_].push_back(std::move(m));
    }
    pipe_->cv.notify_all();
    return true;
  }

  std::shared_ptr<MemoryPipe> pipe_;
  int side_;
};

}  // namespace

std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_memory_channel_pair() {
  auto pipe = std::make_shared<MemoryPipe>();
  return {std::make_shared<MemoryChannel>(pipe, 0), std::make_shared<MemoryChannel>(pipe, 1)};
}

// ---------------------------------------------------------------------------
// Framing and handshake

namespace ws {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool header_has_token(std::string_view value, std::string_view token) {
  const std::string v = lower(value);
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = v.find(',', pos);
    const std::string_view part = trim(std::string_view(v).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (part == token) return true;
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return false;
}

}  // namespace

std::string accept_key(std::string_view client_key) {
  const std::string input = std::string(client_key) + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(input.data()), input.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

std::vector<uint8_t> encode_frame(Opcode op, std::span<const uint8_t> payload, bool fin, std::optional<uint32_t> mask) {
  std::vector<uint8_t> out;
  out.reserve(payload.size() + 14);
  out.push_back(static_cast<uint8_t>((fin ? 0x80 : 0) | static_cast<uint8_t>(op)));
  const uint8_t mask_bit = mask ? 0x80 : 0;
  const uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<uint8_t>(mask_bit | n));
  } else if (n <= 0xffff) {
    out.push_back(mask_bit | 126);
    out.push_back(static_cast<uint8_t>(n >> 8));
    out.push_back(static_cast<uint8_t>(n));
  } else {
    out.push_back(mask_bit | 127);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<uint8_t>(n >> (8 * i)));
  }
  if (!mask) {
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }
  uint8_t key[4];
  for (int i = 0; i < 4; ++i) key[i] = static_cast<uint8_t>(*mask >> (24 - 8 * i));
  out.insert(out.end(), key, key + 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(payload[i] ^ key[i % 4]);
  return out;
}

void FrameParser::feed(std::span<const uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<Frame> FrameParser::next() {
  if (buffer_.size() < 2) return std::nullopt;
  const uint8_t b0 = buffer_[0];
  const uint8_t b1 = buffer_[1];
  if (b0 & 0x70) throw std::runtime_error("websocket: reserved bits set");
  const uint8_t op = b0 & 0x0f;
  if (!(op <= 2 || (op >= 8 && op <= 10))) throw std::runtime_error("websocket: unknown opcode " + std::to_string(op));
  const bool masked = b1 & 0x80;
  std::size_t pos = 2;
  uint64_t n = b1 & 0x7f;
  if (n == 126) {
    if (buffer_.size() < 4) return std::nullopt;
    n = (uint64_t{buffer_[2]} << 8) | buffer_[3];
    pos = 4;
  } else if (n == 127) {
    if (buffer_.size() < 10) return std::nullopt;
    n = 0;
    for (int i = 0; i < 8; ++i) n = (n << 8) | buffer_[2 + static_cast<std::size_t>(i)];
    pos = 10;
  }
  if (op >= 8 && (n > 125 || !(b0 & 0x80))) throw std::runtime_error("websocket: malformed control frame");
  if (n > max_payload_) throw std::runtime_error("websocket: frame of " + std::to_string(n) + " bytes exceeds limit");
  uint8_t key[4] = {0, 0, 0, 0};
  if (masked) {
    if (buffer_.size() < pos + 4) return std::nullopt;
    std::copy_n(buffer_.begin() + static_cast<std::ptrdiff_t>(pos), 4, key);
    pos += 4;
  }
  if (buffer_.size() < pos + n) return std::nullopt;
  Frame f;
  f.fin = b0 & 0x80;
  f.opcode = static_cast<Opcode>(op);
  f.payload.assign(buffer_.begin() + static_cast<std::ptrdiff_t>(pos), buffer_.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (masked)
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] ^= key[i % 4];
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return f;
}

std::optional<HandshakeRequest> parse_upgrade_request(std::string_view raw) {
  const std::size_t line_end = raw.find("\r\n");
  if (line_end == std::string_view::npos) return std::nullopt;
  const std::string_view request_line = raw.substr(0, line_end);
  if (request_line.substr(0, 4) != "GET ") return std::nullopt;
  const std::size_t sp = request_line.find(' ', 4);
  if (sp == std::string_view::npos) return std::nullopt;
  HandshakeRequest req;
  req.path = std::string(request_line.substr(4, sp - 4));

  bool upgrade = false, connection = false, version = false;
  std::size_t pos = line_end + 2;
  while (pos < raw.size()) {
    const std::size_t end = raw.find("\r\n", pos);
    if (end == std::string_view::npos || end == pos) break;
    const std::string_view line = raw.substr(pos, end - pos);
    pos = end + 2;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string name = lower(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    if (name == "upgrade") upgrade = header_has_token(value, "websocket");
    else if (name == "connection") connection = header_has_token(value, "upgrade");
    else if (name == "sec-websocket-version") version = value == "13";
    else if (name == "sec-websocket-key") req.key = std::string(value);
  }
  if (!upgrade || !connection || !version || req.key.empty()) return std::nullopt;
  return req;
}

std::string upgrade_response(std::string_view client_key) {
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
         accept_key(client_key) + "\r\n\r\n";
}

}  // namespace ws

// ---------------------------------------------------------------------------
// Socket helpers

namespace {

bool send_all(int fd, const uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(std::max<int64_t>(0, timeout.count())));
  return r > 0;
}

// Reads an HTTP header block (up to the blank line). Bytes past the header are returned in `rest`.
std::optional<std::string> read_http_head(int fd, std::string& rest, std::chrono::milliseconds timeout) {
  std::string buf;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (buf.find("\r\n\r\n") == std::string::npos) {
    if (buf.size() > 16384) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !wait_readable(fd, left)) return std::nullopt;
    char tmp[2048];
    const ssize_t r = ::recv(fd, tmp, sizeof tmp, 0);
    if (r <= 0) return std::nullopt;
    buf.append(tmp, static_cast<std::size_t>(r));
  }
  const std::size_t end = buf.find("\r\n\r\n") + 4;
  rest = buf.substr(end);
  buf.resize(end);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// WebSocketChannel

WebSocketChannel::WebSocketChannel(int fd, bool client) : fd_(fd), client_(client) {
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  if (client_) mask_state_ = std::random_device{}();
}

WebSocketChannel::~WebSocketChannel() {
  close();
  ::close(fd_);
}

bool WebSocketChannel::send_frame(ws::Opcode op, std::span<const uint8_t> payload) {
  std::lock_guard lock(send_mutex_);
  if (!is_open()) return false;
  std::optional<uint32_t> mask;
  if (client_) {
    mask_state_ = mask_state_ * 1664525u + 1013904223u;
    mask = mask_state_;
  }
  const auto bytes = ws::encode_frame(op, payload, true, mask);
  if (!send_all(fd_, bytes.data(), bytes.size())) {
    std::lock_guard s(state_mutex_);
    open_ = false;
    return false;
  }
  return true;
}

bool WebSocketChannel::send_text(std::string_view text) {
  return send_frame(ws::Opcode::Text, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

bool WebSocketChannel::send_binary(std::span<const uint8_t> bytes) { return send_frame(ws::Opcode::Binary, bytes); }

std::optional<ChannelMessage> WebSocketChannel::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    std::optional<ws::Frame> frame;
    try {
      frame = parser_.next();
    } catch (const std::exception&) {
      close();
      return std::nullopt;
    }
    if (frame) {
      switch (frame->opcode) {
        case ws::Opcode::Ping: send_frame(ws::Opcode::Pong, frame->payload); continue;
        case ws::Opcode::Pong: continue;
        case ws::Opcode::Close: close(); return std::nullopt;
        case ws::Opcode::Continuation:
          if (!partial_op_) {
            close();
            return std::nullopt;
          }
          partial_.insert(partial_.end(), frame->payload.begin(), frame->payload.end());
          break;
        default:
          if (partial_op_) {
            close();
            return std::nullopt;
          }
          partial_op_ = frame->opcode;
          partial_ = std::move(frame->payload);
      }
      if (!frame->fin) continue;
      ChannelMessage m;
      m.binary = *partial_op_ == ws::Opcode::Binary;
      m.data.assign(partial_.begin(), partial_.end());
      partial_.clear();
      partial_op_.reset();
      return m;
    }
    if (!is_open()) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0 || !wait_readable(fd_, left)) return std::nullopt;
    uint8_t tmp[65536];
    const ssize_t r = ::recv(fd_, tmp, sizeof tmp, 0);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      std::lock_guard s(state_mutex_);
      open_ = false;
      return std::nullopt;
    }
    parser_.feed({tmp, static_cast<std::size_t>(r)});
  }
}

void WebSocketChannel::close() {
  {
    std::lock_guard s(state_mutex_);
    if (!open_) return;
  }
  {
    std::lock_guard lock(send_mutex_);
    std::optional<uint32_t> mask;
    if (client_) mask = mask_state_;
    const uint8_t code[2] = {0x03, 0xe8};
    const auto bytes = ws::encode_frame(ws::Opcode::Close, code, true, mask);
    send_all(fd_, bytes.data(), bytes.size());
    std::lock_guard s(state_mutex_);
    open_ = false;
  }
  ::shutdown(fd_, SHUT_RDWR);
}

bool WebSocketChannel::is_open() const {
  std::lock_guard s(state_mutex_);
  return open_;
}

std::shared_ptr<WebSocketChannel> websocket_connect(const std::string& host, uint16_t port, const std::string& path) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw std::runtime_error("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));

  std::random_device rd;
  uint8_t nonce[16];
  for (auto& b : nonce) b = static_cast<uint8_t>(rd());
  unsigned char key_buf[32];
  const int kn = EVP_EncodeBlock(key_buf, nonce, 16);
  const std::string key(reinterpret_cast<const char*>(key_buf), static_cast<std::size_t>(kn));
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                          "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  if (!send_all(fd, reinterpret_cast<const uint8_t*>(req.data()), req.size())) {
    ::close(fd);
    throw std::runtime_error("handshake send failed");
  }
  std::string rest;
  const auto head = read_http_head(fd, rest, std::chrono::seconds(5));
  if (!head || head->rfind("HTTP/1.1 101", 0) != 0 || head->find(ws::accept_key(key)) == std::string::npos) {
    ::close(fd);
    throw std::runtime_error("websocket handshake rejected");
  }
  auto ch = std::make_shared<WebSocketChannel>(fd, true);
  if (!rest.empty()) ch->parser_.feed({reinterpret_cast<const uint8_t*>(rest.data()), rest.size()});
  return ch;
}

// ---------------------------------------------------------------------------
// WebSocketListener

WebSocketListener::WebSocketListener(const std::string& host, uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw std::runtime_error("cannot resolve listen address " + host);
  std::string err = "no usable address";
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd_ < 0) continue;
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd_, 16) == 0) break;
    err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET) port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  else port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
}

WebSocketListener::~WebSocketListener() { close(); }

void WebSocketListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

std::shared_ptr<WebSocketChannel> WebSocketListener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0 || !wait_readable(fd_, timeout)) return nullptr;
  const int cfd = ::accept(fd_, nullptr, nullptr);
  if (cfd < 0) return nullptr;
  std::string rest;
  const auto head = read_http_head(cfd, rest, std::chrono::seconds(5));
  const auto req = head ? ws::parse_upgrade_request(*head) : std::nullopt;
  if (!req) {
    static const std::string bad =
        "HTTP/1.1 400 Bad Request\r\nContent-Type: text/plain\r\nContent-Length: 24\r\nConnection: close\r\n\r\n"
        "websocket upgrade only\r\n";
    send_all(cfd, reinterpret_cast<const uint8_t*>(bad.data()), bad.size());
    ::close(cfd);
    return nullptr;
  }
  const std::string resp = ws::upgrade_response(req->key);
  if (!send_all(cfd, reinterpret_cast<const uint8_t*>(resp.data()), resp.size())) {
    ::close(cfd);
    return nullptr;
  }
  auto ch = std::make_shared<WebSocketChannel>(cfd, false);
  if (!rest.empty()) ch->parser_.feed({reinterpret_cast<const uint8_t*>(rest.data()), rest.size()});
  return ch;
}

}  // namespace rcbf
