// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_STREAM_HPP_
#define DRIVE_STREAM_HPP_

// Websocket stream server for the viewer. One io thread owns every socket;
// other threads hand it messages through broadcast() and read human input
// through take_input() / take_controls().
//
// Sessions:
//   live   - training frames are broadcast, client input is ignored
//   replay - a recorded trace is broadcast at tick_hz, then "end"
//   play   - the server runs the car at tick_hz, taking the latest
//            {"type":"input"} per tick (none means NOOP)

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "drive/env.hpp"
#include "drive/error.hpp"
#include "drive/trace.hpp"
#include "drive/trackmap.hpp"
#include "drive/training.hpp"

namespace drive {

enum class StreamMode { kLive, kReplay, kPlay };

enum class ControlCommand { kReset, kPause, kResume };

inline nlohmann::ordered_json make_hello(const std::string& trk, int tick_hz) {
  nlohmann::ordered_json j;
  j["type"] = "hello";
  j["trk"] = trk;
  j["tick_hz"] = tick_hz;
  j["actions"] = {"LEFT", "RIGHT", "NOOP"};
  return j;
}

inline nlohmann::ordered_json make_error(const std::string& msg) {
  nlohmann::ordered_json j;
  j["type"] = "error";
  j["msg"] = msg;
  return j;
}

struct ClientMessage {
  std::optional<Action> input;
  std::optional<ControlCommand> control;
};

// Parses one client->server frame; throws ProtocolViolation on anything that
// is not a well-formed input or control message.
inline ClientMessage parse_client_message(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ProtocolViolation, "message is not JSON");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw Error(ErrorCode::ProtocolViolation, "message needs a string \"type\"");
  }
  const std::string type = j["type"].get<std::string>();
  ClientMessage msg;
  if (type == "input") {
    if (!j.contains("action") || !j["action"].is_number_integer()) {
      throw Error(ErrorCode::ProtocolViolation, "input needs an integer \"action\"");
    }
    const auto a = j["action"].get<std::int64_t>();
    if (a < 0 || a >= kNumActions) {
      throw Error(ErrorCode::ProtocolViolation, "input action must be 0, 1 or 2");
    }
    msg.input = static_cast<Action>(a);
  } else if (type == "control") {
    const std::string cmd = j.value("cmd", "");
    if (cmd == "reset") {
      msg.control = ControlCommand::kReset;
    } else if (cmd == "pause") {
      msg.control = ControlCommand::kPause;
    } else if (cmd == "resume") {
      msg.control = ControlCommand::kResume;
    } else {
      throw Error(ErrorCode::ProtocolViolation, "control cmd must be reset, pause or resume");
    }
  } else {
    throw Error(ErrorCode::ProtocolViolation, "unknown message type '" + type + "'");
  }
  return msg;
}

class StreamServer {
 public:
  // Binds immediately (port 0 picks a free port); throws PortInUse.
  StreamServer(std::string trk_text, int port, int tick_hz, StreamMode mode)
      : hello_(std::make_shared<const std::string>(make_hello(trk_text, tick_hz).dump())),
        tick_hz_(tick_hz),
        mode_(mode),
        acceptor_(ioc_) {
    namespace net = boost::asio;
    using tcp = net::ip::tcp;
    boost::system::error_code ec;
    const tcp::endpoint endpoint(net::ip::make_address("0.0.0.0"),
                                 static_cast<unsigned short>(port));
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error(ec == net::error::address_in_use ? ErrorCode::PortInUse : ErrorCode::IoError,
                  "port " + std::to_string(port) + ": " + ec.message());
    }
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  StreamServer(const StreamServer&) = delete;
  StreamServer& operator=(const StreamServer&) = delete;

  ~StreamServer() { stop(); }

  int port() const { return port_; }
  int tick_hz() const { return tick_hz_; }
  StreamMode mode() const { return mode_; }
  std::size_t client_count() const { return clients_.load(); }

  void broadcast(const nlohmann::ordered_json& msg) {
    auto text = std::make_shared<const std::string>(msg.dump());
    boost::asio::post(ioc_, [this, text] {
      for (const auto& s : sessions_) s->send(text);
    });
  }

  bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return clients_.load() >= n || stopped_; }) &&
           clients_.load() >= n;
  }

  // Latest input since the previous call, if any.
  std::optional<Action> take_input() {
    const int a = latest_input_.exchange(-1);
    if (a < 0) return std::nullopt;
    return static_cast<Action>(a);
  }

  std::vector<ControlCommand> take_controls() {
    std::lock_guard lock(mu_);
    std::vector<ControlCommand> out(controls_.begin(), controls_.end());
    controls_.clear();
    return out;
  }

  // Blocks until every queued message has been written or the timeout ends.
  bool drain(std::chrono::milliseconds timeout) {
    // Posting a no-op first orders the check after earlier broadcasts.
    std::promise<void> posted;
    boost::asio::post(ioc_, [&posted] { posted.set_value(); });
    posted.get_future().wait_for(timeout);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (pending_.load() > 0 && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    return pending_.load() == 0;
  }

  void stop() {
    if (!thread_.joinable()) return;
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for (const auto& s : sessions_) s->close();
    });
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(500);
    while (clients_.load() > 0 && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    ioc_.stop();
    thread_.join();
    {
      std::lock_guard lock(mu_);
      stopped_ = true;
    }
    cv_.notify_all();
  }

 private:
  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(boost::asio::ip::tcp::socket&& socket, StreamServer& server)
        : ws_(std::move(socket)), server_(server) {}

    void start() {
      namespace websocket = boost::beast::websocket;
      ws_.set_option(websocket::stream_base::timeout::suggested(boost::beast::role_type::server));
      ws_.async_accept(boost::beast::bind_front_handler(&Session::on_accept, shared_from_this()));
    }

    void send(std::shared_ptr<const std::string> text) {
      if (closing_) return;
      ++server_.pending_;
      queue_.push_back(std::move(text));
      if (queue_.size() == 1) do_write();
    }

    // Sends an error frame, then closes.
    void fail(const std::string& msg) {
      if (closing_) return;
      send(std::make_shared<const std::string>(make_error(msg).dump()));
      close_after_write_ = true;
    }

    void close() {
      if (closing_) return;
      closing_ = true;
      ws_.async_close(boost::beast::websocket::close_code::normal,
                      [self = shared_from_this()](boost::beast::error_code) {});
    }

   private:
    void on_accept(boost::beast::error_code ec) {
      if (ec) return;
      send(server_.hello_);
      server_.join(shared_from_this());
      do_read();
    }

    void do_read() {
      ws_.async_read(buffer_, boost::beast::bind_front_handler(&Session::on_read,
                                                               shared_from_this()));
    }

    void on_read(boost::beast::error_code ec, std::size_t) {
      if (ec) {
        server_.leave(this);
        return;
      }
      const std::string text = boost::beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
      try {
        server_.handle(parse_client_message(text));
      } catch (const Error& e) {
        fail(e.what());
        return;
      }
      do_read();
    }

    void do_write() {
      ws_.text(true);
      ws_.async_write(boost::asio::buffer(*queue_.front()),
                      boost::beast::bind_front_handler(&Session::on_write, shared_from_this()));
    }

    void on_write(boost::beast::error_code ec, std::size_t) {
      queue_.pop_front();
      --server_.pending_;
      if (ec) {
        server_.pending_ -= static_cast<int>(queue_.size());
        queue_.clear();
        server_.leave(this);
        return;
      }
      if (!queue_.empty()) {
        do_write();
      } else if (close_after_write_) {
        close();
      }
    }

    boost::beast::websocket::stream<boost::beast::tcp_stream> ws_;
    StreamServer& server_;
    boost::beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool close_after_write_ = false;
    bool closing_ = false;
  };

  void do_accept() {
    acceptor_.async_accept(boost::asio::make_strand(ioc_),
                           [this](boost::beast::error_code ec,
                                  boost::asio::ip::tcp::socket socket) {
                             if (ec) return;
                             std::make_shared<Session>(std::move(socket), *this)->start();
                             do_accept();
                           });
  }

  void join(const std::shared_ptr<Session>& s) {
    sessions_.insert(s);
    {
      std::lock_guard lock(mu_);
      clients_.store(sessions_.size());
    }
    cv_.notify_all();
  }

  void leave(Session* s) {
    for (auto it = sessions_.begin(); it != sessions_.end(); ++it) {
      if (it->get() == s) {
        sessions_.erase(it);
        break;
      }
    }
    std::lock_guard lock(mu_);
    clients_.store(sessions_.size());
  }

  void handle(const ClientMessage& msg) {
    if (mode_ != StreamMode::kPlay) return;
    if (msg.input) latest_input_.store(action_index(*msg.input));
    if (msg.control) {
      std::lock_guard lock(mu_);
      controls_.push_back(*msg.control);
    }
  }

  std::shared_ptr<const std::string> hello_;
  int tick_hz_;
  StreamMode mode_;
  int port_ = 0;
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::thread thread_;
  std::set<std::shared_ptr<Session>> sessions_;  // io thread only
  std::atomic<std::size_t> clients_{0};
  std::atomic<int> pending_{0};
  std::atomic<int> latest_input_{-1};
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ControlCommand> controls_;
  bool stopped_ = false;
};

// Server-authoritative human driving at the server's tick rate until `stop`
// is set. A terminal frame freezes the car until a reset control arrives.
inline void run_play_session(StreamServer& server, const TrackSpec& track,
                             const EnvConfig& config, const std::atomic<bool>& stop) {
  Environment env(std::make_shared<const TrackSpec>(track), config);
  const auto tick = std::chrono::nanoseconds(1'000'000'000LL / server.tick_hz());
  auto broadcast_state = [&](const StepResult& r, Action a) {
    server.broadcast(make_frame(r.steps, env.state().pose, r.observation, a, r.reward,
                                r.score, r.terminal, 0.0));
  };
  StepResult res = env.reset(0);
  broadcast_state(res, Action::kNoop);
  bool paused = false;
  auto next = std::chrono::steady_clock::now() + tick;
  while (!stop.load()) {
    std::this_thread::sleep_until(next);
    next += tick;
    for (ControlCommand c : server.take_controls()) {
      if (c == ControlCommand::kReset) {
        res = env.reset(0);
        paused = false;
        broadcast_state(res, Action::kNoop);
      } else {
        paused = c == ControlCommand::kPause;
      }
    }
    const std::optional<Action> input = server.take_input();
    if (paused || !env.state().alive) continue;
    const Action a = input.value_or(Action::kNoop);
    res = env.step(a);
    broadcast_state(res, a);
  }
}

// Broadcasts a recorded trace at the server's tick rate, then "end".
inline void run_replay_session(StreamServer& server, const Trace& trace,
                               const std::atomic<bool>& stop) {
  const auto tick = std::chrono::nanoseconds(1'000'000'000LL / server.tick_hz());
  auto next = std::chrono::steady_clock::now();
  int score = 0;
  for (std::size_t i = 0; i < trace.events.size() && !stop.load(); ++i) {
    const TraceEvent& e = trace.events[i];
    score += e.reward;
    std::this_thread::sleep_until(next);
    next += tick;
    server.broadcast(make_frame(e.t, {e.x, e.y, e.theta}, e.sensors, e.action, e.reward, score,
                                i + 1 == trace.events.size(), e.epsilon));
  }
  server.broadcast(make_end(score, static_cast<int>(trace.events.size())));
}

}  // namespace drive

#endif  // DRIVE_STREAM_HPP_
