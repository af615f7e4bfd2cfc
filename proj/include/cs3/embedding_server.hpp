/*
 * Copyright 2026 The CS3 Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Standalone key-value service for cascade vectors. EMA is applied on the
// server so that concurrent writers never interleave a read-modify-write:
// for any single key, the stored value is the EMA replay of that key's
// writes in the order the server processed them.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cs3/sync_caches.hpp"
#include "cs3/wire_protocol.hpp"

namespace cs3 {

class ConnectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LatencyStats {
  struct Entry {
    std::uint64_t count = 0;
    double p50_us = 0.0;
    double p99_us = 0.0;
    double max_us = 0.0;
  };
  Entry get, ema_put, stats, shutdown;

  const Entry& of(wire::Opcode op) const {
    switch (op) {
      case wire::Opcode::Get:
        return get;
      case wire::Opcode::EmaPut:
        return ema_put;
      case wire::Opcode::Stats:
        return stats;
      case wire::Opcode::Shutdown:
        return shutdown;
    }
    return get;
  }
  Entry& of(wire::Opcode op) { return const_cast<Entry&>(std::as_const(*this).of(op)); }
};

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline HostPort parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("address '" + addr + "' lacks :port");
  HostPort hp;
  hp.host = addr.substr(0, colon);
  if (hp.host.empty() || hp.host == "localhost") hp.host = "127.0.0.1";
  const std::string port = addr.substr(colon + 1);
  char* end = nullptr;
  const unsigned long p = std::strtoul(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p > 65535)
    throw std::invalid_argument("address '" + addr + "' has invalid port");
  hp.port = static_cast<std::uint16_t>(p);
  return hp;
}

namespace detail {

inline bool send_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

inline bool recv_all(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, out + got, len - got, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    got += static_cast<std::size_t>(n);
  }
  return true;
}

// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace detail

struct ServerOptions {
  std::string bind = "127.0.0.1:0";
  std::uint32_t dim = 32;
  std::string log_path;  // empty: no persistence
};

class EmbeddingServer {
 public:
  explicit EmbeddingServer(ServerOptions opts) : opts_(std::move(opts)) {
    if (opts_.dim == 0 || opts_.dim > wire::kMaxDim)
      throw std::invalid_argument("embedding server: dim must be in [1, 4096]");
  }
  ~EmbeddingServer() { stop(); }
  EmbeddingServer(const EmbeddingServer&) = delete;
  EmbeddingServer& operator=(const EmbeddingServer&) = delete;

  std::uint32_t dim() const { return opts_.dim; }

  // Binds, replays the log if any, and starts accepting connections.
  void start() {
    if (!opts_.log_path.empty()) replay_log();
    const HostPort hp = parse_address(opts_.bind);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket(): " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(hp.port);
    if (::inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1) {
      ::close(listen_fd_);
      throw std::invalid_argument("bind address '" + hp.host + "' is not an IPv4 address");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
        ::listen(listen_fd_, 64) < 0) {
      const std::string err = std::strerror(errno);
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw std::runtime_error("cannot bind " + opts_.bind + ": " + err);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (!opts_.log_path.empty()) {
      log_.open(opts_.log_path, std::ios::binary | std::ios::app);
      if (!log_) throw std::runtime_error("cannot open log '" + opts_.log_path + "'");
    }
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const { return port_; }
  std::string address() const { return "127.0.0.1:" + std::to_string(port_); }
  bool running() const { return running_; }

  // Blocks until a SHUTDOWN request or stop().
  void wait() {
    std::unique_lock lock(stop_mu_);
    stop_cv_.wait(lock, [this] { return !running_; });
  }

  void stop() {
    {
      std::lock_guard lock(stop_mu_);
      running_ = false;
    }
    stop_cv_.notify_all();
    if (accept_thread_.joinable()) accept_thread_.join();
    if (listen_fd_ >= 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(conn_mu_);
      for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
      threads.swap(conn_threads_);
    }
    for (auto& t : threads)
      if (t.joinable()) t.join();
    if (log_.is_open()) log_.close();
  }

  // Handles one request body and returns the full response frame. Public so
  // the protocol can be exercised without sockets.
  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> body, bool* shutdown = nullptr) {
    wire::ParsedRequest parsed = wire::parse_request(body, opts_.dim);
    if (!parsed.request) {
      errors_.fetch_add(1, std::memory_order_relaxed);
      return wire::encode_status(wire::Status::Err);
    }
    const wire::Request& req = *parsed.request;
    switch (req.op) {
      case wire::Opcode::Get: {
        Shard& s = shard(req.key);
        std::lock_guard lock(s.mu);
        auto it = s.entries.find(req.key);
        if (it == s.entries.end()) return wire::encode_status(wire::Status::Miss);
        return wire::encode_vector_response(it->second);
      }
      case wire::Opcode::EmaPut: {
        apply_put(req, body);
        return wire::encode_status(wire::Status::Ok);
      }
      case wire::Opcode::Stats: {
        const LatencyStats st = stats();
        std::vector<wire::OpStats> out;
        for (auto op : {wire::Opcode::Get, wire::Opcode::EmaPut, wire::Opcode::Stats,
                        wire::Opcode::Shutdown}) {
          const auto& e = st.of(op);
          out.push_back({op, e.count, static_cast<float>(e.p50_us),
                         static_cast<float>(e.p99_us), static_cast<float>(e.max_us)});
        }
        return wire::encode_stats_response(out);
      }
      case wire::Opcode::Shutdown:
        if (shutdown) *shutdown = true;
        return wire::encode_status(wire::Status::Ok);
    }
    return wire::encode_status(wire::Status::Err);
  }

  LatencyStats stats() const {
    LatencyStats out;
    std::lock_guard lock(lat_mu_);
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      std::vector<double> sorted = samples_[i];
      std::sort(sorted.begin(), sorted.end());
      auto& e = out.of(static_cast<wire::Opcode>(i + 1));
      e.count = sorted.size();
      e.p50_us = detail::percentile(sorted, 0.50);
      e.p99_us = detail::percentile(sorted, 0.99);
      e.max_us = sorted.empty() ? 0.0 : sorted.back();
    }
    return out;
  }

  std::uint64_t error_count() const { return errors_.load(); }

  std::optional<std::vector<float>> peek(const EntityKey& key) const {
    const Shard& s = shards_[shard_index(key)];
    std::lock_guard lock(s.mu);
    auto it = s.entries.find(key);
    if (it == s.entries.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : shards_) {
      std::lock_guard lock(s.mu);
      n += s.entries.size();
    }
    return n;
  }

 private:
  static constexpr std::size_t kShards = 16;

  struct Shard {
    mutable std::mutex mu;
    std::unordered_map<EntityKey, std::vector<float>, EntityKeyHash> entries;
  };

  static std::size_t shard_index(const EntityKey& key) { return EntityKeyHash{}(key) % kShards; }
  Shard& shard(const EntityKey& key) { return shards_[shard_index(key)]; }

  void apply_put(const wire::Request& req, std::span<const std::uint8_t> body) {
    Shard& s = shard(req.key);
    std::lock_guard lock(s.mu);
    auto [it, inserted] = s.entries.try_emplace(req.key, std::vector<float>(opts_.dim, 0.0f));
    std::vector<float>& cur = it->second;
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = ema_component_f32(cur[i], req.payload[i], req.beta);
    if (log_.is_open()) {
      std::lock_guard log_lock(log_mu_);
      std::uint8_t len[4];
      const auto n = static_cast<std::uint32_t>(body.size());
      for (int i = 0; i < 4; ++i) len[i] = static_cast<std::uint8_t>(n >> (8 * i));
      log_.write(reinterpret_cast<const char*>(len), 4);
      log_.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
      log_.flush();
    }
  }

  void replay_log() {
    std::ifstream in(opts_.log_path, std::ios::binary);
    if (!in) return;
    std::vector<std::uint8_t> body;
    while (true) {
      std::uint8_t len_bytes[4];
      if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) break;
      const std::uint32_t len = wire::detail::get_u32(len_bytes);
      if (len > wire::kMaxFrameBody) throw std::runtime_error("corrupt log: oversized frame");
      body.resize(len);
      if (!in.read(reinterpret_cast<char*>(body.data()), len)) break;  // torn tail
      wire::ParsedRequest p = wire::parse_request(body, opts_.dim);
      if (!p.request || p.request->op != wire::Opcode::EmaPut)
        throw std::runtime_error("corrupt log: invalid frame");
      apply_put(*p.request, body);
    }
  }

  void record(wire::Opcode op, double us) {
    std::lock_guard lock(lat_mu_);
    samples_[static_cast<std::size_t>(op) - 1].push_back(us);
  }

  void accept_loop() {
    while (running_) {
      pollfd pfd{listen_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, 50);
      if (rc <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard lock(conn_mu_);
      if (!running_) {
        ::close(fd);
        break;
      }
      conn_fds_.insert(fd);
      conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
  }

  void serve_connection(int fd) {
    using Clock = std::chrono::steady_clock;
    std::vector<std::uint8_t> body;
    while (running_) {
      std::uint8_t len_bytes[4];
      if (!detail::recv_all(fd, len_bytes, 4)) break;
      const std::uint32_t len = wire::detail::get_u32(len_bytes);
      if (len > wire::kMaxFrameBody) {
        // The stream cannot be resynchronized after a bogus length.
        errors_.fetch_add(1, std::memory_order_relaxed);
        detail::send_all(fd, wire::encode_status(wire::Status::Err));
        break;
      }
      body.resize(len);
      if (len > 0 && !detail::recv_all(fd, body.data(), len)) break;
      const auto t0 = Clock::now();
      bool shutdown = false;
      const std::vector<std::uint8_t> resp = handle(body, &shutdown);
      const bool ok = detail::send_all(fd, resp);
      const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
      if (body.size() >= 1 && body[0] >= 0x01 && body[0] <= 0x04 && resp.size() > 4 &&
          resp[4] != static_cast<std::uint8_t>(wire::Status::Err)) {
        record(static_cast<wire::Opcode>(body[0]), us);
      }
      if (!ok) break;
      if (shutdown) {
        {
          std::lock_guard lock(stop_mu_);
          running_ = false;
        }
        stop_cv_.notify_all();
        break;
      }
    }
    std::lock_guard lock(conn_mu_);
    conn_fds_.erase(fd);
    ::close(fd);
  }

  ServerOptions opts_;
  std::array<Shard, kShards> shards_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> errors_{0};
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;

  std::mutex conn_mu_;
  std::set<int> conn_fds_;
  std::vector<std::thread> conn_threads_;

  std::mutex stop_mu_;
  std::condition_variable stop_cv_;

  mutable std::mutex lat_mu_;
  std::array<std::vector<double>, 4> samples_;

  std::mutex log_mu_;
  std::ofstream log_;
};

// Blocking client over one TCP connection. Requests on one connection are
// answered in order, so reads observe this connection's earlier writes.
class EmbeddingClient {
 public:
  EmbeddingClient() = default;
  explicit EmbeddingClient(const std::string& address) { connect(address); }
  ~EmbeddingClient() { close(); }
  EmbeddingClient(const EmbeddingClient&) = delete;
  EmbeddingClient& operator=(const EmbeddingClient&) = delete;
  EmbeddingClient(EmbeddingClient&& o) noexcept : fd_(o.fd_), address_(std::move(o.address_)) {
    o.fd_ = -1;
  }

  void connect(const std::string& address) {
    close();
    address_ = address;
    const HostPort hp = parse_address(address);
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ConnectionError("socket(): " + std::string(std::strerror(errno)));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(hp.port);
    if (::inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1) {
      close();
      throw ConnectionError("invalid server address '" + address + "'");
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      const std::string err = std::strerror(errno);
      close();
      throw ConnectionError("cannot connect to " + address + ": " + err);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  bool connected() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  // Sends a raw frame and returns the raw response body.
  std::vector<std::uint8_t> roundtrip(std::span<const std::uint8_t> frame) {
    if (fd_ < 0) throw ConnectionError("not connected");
    if (!detail::send_all(fd_, frame)) {
      close();
      throw ConnectionError("send failed");
    }
    std::uint8_t len_bytes[4];
    if (!detail::recv_all(fd_, len_bytes, 4)) {
      close();
      throw ConnectionError("connection closed before response");
    }
    const std::uint32_t len = wire::detail::get_u32(len_bytes);
    if (len > wire::kMaxFrameBody + 16) {
      close();
      throw ConnectionError("oversized response frame");
    }
    std::vector<std::uint8_t> body(len);
    if (len > 0 && !detail::recv_all(fd_, body.data(), len)) {
      close();
      throw ConnectionError("truncated response");
    }
    return body;
  }

  // nullopt on MISS. GET is idempotent, so one reconnect-and-retry is made
  // when the connection drops.
  std::optional<std::vector<float>> get(const EntityKey& key) {
    wire::Request req{wire::Opcode::Get, key, 0.0f, {}};
    const auto frame = wire::encode_request(req);
    std::vector<std::uint8_t> body;
    try {
      body = roundtrip(frame);
    } catch (const ConnectionError&) {
      if (address_.empty()) throw;
      connect(address_);
      body = roundtrip(frame);
    }
    auto resp = wire::parse_response(body, wire::Opcode::Get);
    if (!resp) throw ConnectionError("malformed GET response");
    if (resp->status == wire::Status::Miss) return std::nullopt;
    if (resp->status != wire::Status::Ok) throw std::runtime_error("GET rejected by server");
    return std::move(resp->payload);
  }

  // Not retried: a lost acknowledgement leaves it unknown whether the write
  // was applied, and a blind retry could apply it twice.
  wire::Status ema_put(const EntityKey& key, std::span<const float> h, float beta) {
    wire::Request req{wire::Opcode::EmaPut, key, beta, std::vector<float>(h.begin(), h.end())};
    auto resp = wire::parse_response(roundtrip(wire::encode_request(req)), wire::Opcode::EmaPut);
    if (!resp) throw ConnectionError("malformed EMA_PUT response");
    return resp->status;
  }

  LatencyStats stats() {
    wire::Request req{wire::Opcode::Stats, {}, 0.0f, {}};
    auto resp = wire::parse_response(roundtrip(wire::encode_request(req)), wire::Opcode::Stats);
    if (!resp || resp->status != wire::Status::Ok) throw ConnectionError("malformed STATS response");
    LatencyStats out;
    for (const auto& s : resp->stats) {
      if (s.op < wire::Opcode::Get || s.op > wire::Opcode::Shutdown) continue;
      auto& e = out.of(s.op);
      e.count = s.count;
      e.p50_us = s.p50_us;
      e.p99_us = s.p99_us;
      e.max_us = s.max_us;
    }
    return out;
  }

  void shutdown_server() {
    wire::Request req{wire::Opcode::Shutdown, {}, 0.0f, {}};
    roundtrip(wire::encode_request(req));
  }

 private:
  int fd_ = -1;
  std::string address_;
};

// Cascade-vector backend that talks to an embedding server. Fetch failures
// read as zero so training continues with cold-start semantics.
class RemoteCms final : public CmsBackend {
 public:
  RemoteCms(const std::string& address, std::size_t dim) : dim_(dim) {
    client_.connect(address);
  }

  std::size_t dim() const override { return dim_; }

  Vec read(const EntityKey& key) override {
    ++counters_.reads;
    try {
      auto v = client_.get(key);
      if (!v) return Vec(dim_, 0.0);
      if (v->size() != dim_) throw ShapeError("embedding server dim does not match cms_dim");
      ++counters_.hits;
      return Vec(v->begin(), v->end());
    } catch (const ConnectionError&) {
      ++failures_;
      return Vec(dim_, 0.0);
    }
  }

  void ema_put(const EntityKey& key, std::span<const double> h, double beta) override {
    check_dims(dim_, h.size(), "remote cms put");
    std::vector<float> hf(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) hf[i] = static_cast<float>(h[i]);
    ++counters_.writes;
    try {
      if (!client_.connected()) return void(++failures_);
      if (client_.ema_put(key, hf, static_cast<float>(beta)) != wire::Status::Ok) ++failures_;
    } catch (const ConnectionError&) {
      ++failures_;
    }
  }

  CacheCounters counters() const override { return counters_; }
  std::uint64_t failures() const { return failures_; }

 private:
  std::size_t dim_;
  EmbeddingClient client_;
  CacheCounters counters_;
  std::uint64_t failures_ = 0;
};

}  // namespace cs3
