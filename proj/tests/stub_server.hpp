#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>

namespace testing_support {

// httplib server on an ephemeral localhost port, stopped on destruction.
class StubServer {
public:
  StubServer() = default;
  StubServer(const StubServer &) = delete;
  StubServer &operator=(const StubServer &) = delete;
  ~StubServer() { stop(); }

  httplib::Server &server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0)
      throw std::runtime_error("stub server could not bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string url(const std::string &path = "") const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

} // namespace testing_support
