#include <doctest.h>

#include <thread>

#include "rcbf/websocket.hpp"

using namespace rcbf;
using namespace std::chrono_literals;

namespace {
std::span<const uint8_t> bytes(const std::string& s) {
  return {reinterpret_cast<const uint8_t*>(s.data()), s.size()};
}
}  // namespace

TEST_CASE("accept key for the published example nonce") {
  CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("frame encoding lengths and masking") {
  const std::string small(5, 'a'), mid(300, 'b'), big(70000, 'c');
  CHECK(ws::encode_frame(ws::Opcode::Text, bytes(small)).size() == 2 + 5);
  CHECK(ws::encode_frame(ws::Opcode::Text, bytes(mid)).size() == 4 + 300);
  CHECK(ws::encode_frame(ws::Opcode::Binary, bytes(big)).size() == 10 + 70000);
  const auto masked = ws::encode_frame(ws::Opcode::Text, bytes(small), true, 0x01020304u);
  CHECK(masked.size() == 2 + 4 + 5);
  CHECK((masked[1] & 0x80) != 0);

  ws::FrameParser p;
  p.feed(masked);
  auto f = p.next();
  REQUIRE(f);
  CHECK(f->opcode == ws::Opcode::Text);
  CHECK(std::string(f->payload.begin(), f->payload.end()) == small);
}

TEST_CASE("parser handles split input") {
  const std::string mid(300, 'q');
  const auto enc = ws::encode_frame(ws::Opcode::Binary, bytes(mid), true, 7u);
  ws::FrameParser p;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    CHECK_FALSE(p.next());
    p.feed(std::span<const uint8_t>(&enc[i], 1));
  }
  auto f = p.next();
  REQUIRE(f);
  CHECK(f->payload.size() == 300);
  CHECK_FALSE(p.next());
}

TEST_CASE("parser rejects oversized and malformed frames") {
  ws::FrameParser p(16);
  const std::string big(40, 'x');
  p.feed(ws::encode_frame(ws::Opcode::Binary, bytes(big)));
  CHECK_THROWS(p.next());
  ws::FrameParser q;
  const std::vector<uint8_t> reserved{0xF1, 0x00};
  q.feed(reserved);
  CHECK_THROWS(q.next());
}

TEST_CASE("upgrade request parsing") {
  const std::string req =
      "GET /stream HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n";
  const auto h = ws::parse_upgrade_request(req);
  REQUIRE(h);
  CHECK(h->path == "/stream");
  CHECK(h->key == "dGhlIHNhbXBsZSBub25jZQ==");
  CHECK(ws::upgrade_response(h->key).find("s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);
  CHECK_FALSE(ws::parse_upgrade_request("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
}

TEST_CASE("memory channel pair") {
  auto [a, b] = make_memory_channel_pair();
  CHECK(a->send_text("hi"));
  const std::vector<uint8_t> blob{1, 2, 3};
  CHECK(b->send_binary(blob));
  auto m = b->receive(100ms);
  REQUIRE(m);
  CHECK_FALSE(m->binary);
  CHECK(m->data == "hi");
  m = a->receive(100ms);
  REQUIRE(m);
  CHECK(m->binary);
  CHECK(m->data.size() == 3);
  CHECK_FALSE(a->receive(1ms));
  a->close();
  CHECK_FALSE(b->is_open());
  CHECK_FALSE(b->send_text("late"));
}

TEST_CASE("websocket loopback") {
  WebSocketListener listener("127.0.0.1", 0);
  REQUIRE(listener.port() != 0);
  std::shared_ptr<WebSocketChannel> server;
  std::thread t([&] { server = listener.accept(2000ms); });
  auto client = websocket_connect("127.0.0.1", listener.port(), "/");
  t.join();
  REQUIRE(server);
  REQUIRE(client);

  const std::string big(100000, 'z');
  CHECK(client->send_text(big));
  auto m = server->receive(2000ms);
  REQUIRE(m);
  CHECK(m->data == big);

  std::vector<uint8_t> blob(70000);
  for (std::size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<uint8_t>(i * 7);
  CHECK(server->send_binary(blob));
  m = client->receive(2000ms);
  REQUIRE(m);
  CHECK(m->binary);
  CHECK(std::vector<uint8_t>(m->data.begin(), m->data.end()) == blob);

  client->close();
  for (int i = 0; i < 100 && server->is_open(); ++i) server->receive(10ms);
  CHECK_FALSE(server->is_open());
  CHECK_FALSE(listener.accept(10ms));
  listener.close();
}

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

namespace {
int raw_connect(uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  return fd;
}

void send_raw(int fd, std::span<const uint8_t> b) { REQUIRE(::send(fd, b.data(), b.size(), 0) == static_cast<ssize_t>(b.size())); }

std::string read_until(int fd, const std::string& end) {
  std::string s;
  char c;
  while (s.find(end) == std::string::npos && ::recv(fd, &c, 1, 0) == 1) s += c;
  return s;
}
}  // namespace

TEST_CASE("fragmented messages, ping and close on a raw socket") {
  WebSocketListener listener("127.0.0.1", 0);
  std::shared_ptr<WebSocketChannel> server;
  std::thread t([&] { server = listener.accept(2000ms); });
  const int fd = raw_connect(listener.port());
  const std::string hs =
      "GET / HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n";
  send_raw(fd, bytes(hs));
  const std::string reply = read_until(fd, "\r\n\r\n");
  t.join();
  REQUIRE(server);
  CHECK(reply.find("101") != std::string::npos);

  send_raw(fd, ws::encode_frame(ws::Opcode::Text, bytes("hel"), false, 11u));
  send_raw(fd, ws::encode_frame(ws::Opcode::Ping, bytes("p!"), true, 12u));
  send_raw(fd, ws::encode_frame(ws::Opcode::Continuation, bytes("lo"), true, 13u));
  auto m = server->receive(2000ms);
  REQUIRE(m);
  CHECK(m->data == "hello");

  // The pong precedes anything else the server writes.
  uint8_t head[2];
  REQUIRE(::recv(fd, head, 2, MSG_WAITALL) == 2);
  CHECK((head[0] & 0x0F) == static_cast<uint8_t>(ws::Opcode::Pong));
  CHECK((head[1] & 0x80) == 0);
  CHECK((head[1] & 0x7F) == 2);
  char body[2];
  REQUIRE(::recv(fd, body, 2, MSG_WAITALL) == 2);
  CHECK(std::string(body, 2) == "p!");

  send_raw(fd, ws::encode_frame(ws::Opcode::Close, {}, true, 14u));
  for (int i = 0; i < 100 && server->is_open(); ++i) server->receive(10ms);
  CHECK_FALSE(server->is_open());
  ::close(fd);
  listener.close();
}

TEST_CASE("plain http requests are refused") {
  WebSocketListener listener("127.0.0.1", 0);
  std::shared_ptr<WebSocketChannel> server;
  std::thread t([&] { server = listener.accept(2000ms); });
  const int fd = raw_connect(listener.port());
  send_raw(fd, bytes("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
  const std::string reply = read_until(fd, "\r\n\r\n");
  t.join();
  CHECK_FALSE(server);
  CHECK(reply.find("400") != std::string::npos);
  ::close(fd);
}
