/**
 * @file live.hpp
 * @brief Live-mode plumbing: message channels, asynchronous log persistence,
 *        the websocket endpoint and the paced 1 kHz tick driver.
 *
 * Threads:
 *   tick driver   owns LiveSession; never blocks on I/O
 *   network       Asio io_context running the websocket endpoint
 *   writer        drains PersistJobs to disk
 *
 * The driver and the network exchange data only through two one-way
 * channels (inbound client events, outbound frames).
 */
#pragma once

#include <tiltop/protocol.hpp>
#include <tiltop/session.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace tiltop {

/// Mutex-guarded queue; the lock is held only for a push or a swap.
template<class T>
class Channel
{
public:
  explicit Channel(std::size_t capacity = 4096) : capacity_(capacity) {}

  bool try_push(T v)
  {
    std::lock_guard lock(m_);
    if(q_.size() >= capacity_) return false;
    q_.push_back(std::move(v));
    return true;
  }

  std::deque<T> drain()
  {
    std::deque<T> out;
    std::lock_guard lock(m_);
    out.swap(q_);
    return out;
  }

private:
  std::mutex m_;
  std::deque<T> q_;
  std::size_t capacity_;
};

/// Bounded background writer. try_submit never blocks.
class AsyncWriter
{
public:
  explicit AsyncWriter(std::size_t capacity = 64) : capacity_(capacity), thread_([this] { run(); }) {}

  AsyncWriter(const AsyncWriter &) = delete;
  AsyncWriter & operator=(const AsyncWriter &) = delete;

  ~AsyncWriter() { stop(); }

  bool try_submit(PersistJob & job)
  {
    {
      std::lock_guard lock(m_);
      if(q_.size() >= capacity_) return false;
      q_.push_back(std::move(job));
    }
    cv_.notify_one();
    return true;
  }

  /// Flush everything queued and join.
  void stop()
  {
    {
      std::lock_guard lock(m_);
      if(stopping_) return;
      stopping_ = true;
    }
    cv_.notify_one();
    if(thread_.joinable()) thread_.join();
  }

  bool failed() const { return failed_.load(); }

  std::string failure() const
  {
    std::lock_guard lock(m_);
    return failure_;
  }

  bool idle() const
  {
    std::lock_guard lock(m_);
    return q_.empty() && !busy_;
  }

private:
  void run()
  {
    for(;;)
    {
      PersistJob job;
      {
        std::unique_lock lock(m_);
        cv_.wait(lock, [this] { return stopping_ || !q_.empty(); });
        if(q_.empty()) return;
        job = std::move(q_.front());
        q_.pop_front();
        busy_ = true;
      }
      try
      {
        if(!failed_) execute(job);
      }
      catch(const std::exception & e)
      {
        std::lock_guard lock(m_);
        failure_ = e.what();
        failed_ = true;
      }
      std::lock_guard lock(m_);
      busy_ = false;
    }
  }

  mutable std::mutex m_;
  std::condition_variable cv_;
  std::deque<PersistJob> q_;
  std::size_t capacity_;
  bool stopping_ = false;
  bool busy_ = false;
  std::atomic<bool> failed_{false};
  std::string failure_;
  std::thread thread_;
};

struct ClientEvent
{
  enum class Kind
  {
    Connected,
    Disconnected,
    Message
  };
  Kind kind = Kind::Message;
  std::uint64_t client = 0;
  std::string text;
};

struct OutboundFrame
{
  std::optional<std::uint64_t> client; ///< nullopt: broadcast
  std::string text;
};

/// Websocket endpoint. Every received text frame becomes a ClientEvent; frames
/// handed to send() are written asynchronously. A slow client drops its
/// oldest queued frames instead of stalling anyone.
class WsServer
{
  using tcp = boost::asio::ip::tcp;

public:
  WsServer(const std::string & address, std::uint16_t port, Channel<ClientEvent> & inbound)
  : inbound_(inbound), acceptor_(ioc_)
  {
    tcp::endpoint ep(boost::asio::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~WsServer() { stop(); }

  std::uint16_t port() const { return port_; }

  void send(OutboundFrame f)
  {
    boost::asio::post(ioc_, [this, f = std::move(f)]() mutable {
      if(f.client)
      {
        auto it = clients_.find(*f.client);
        if(it != clients_.end()) it->second->enqueue(std::move(f.text));
      }
      else
        for(auto & [id, c] : clients_) c->enqueue(f.text);
    });
  }

  void stop()
  {
    if(stopped_.exchange(true)) return;
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for(auto & [id, c] : clients_) c->close();
    });
    // Give pending closes a moment, then stop the loop.
    boost::asio::post(ioc_, [this] { ioc_.stop(); });
    if(thread_.joinable()) thread_.join();
  }

private:
  class Client : public std::enable_shared_from_this<Client>
  {
  public:
    Client(tcp::socket socket, WsServer & server, std::uint64_t id)
    : ws_(std::move(socket)), server_(server), id_(id)
    {
    }

    void start()
    {
      ws_.text(true);
      ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) {
        if(ec) return;
        self->server_.clients_[self->id_] = self;
        self->server_.inbound_.try_push({ClientEvent::Kind::Connected, self->id_, {}});
        self->read();
      });
    }

    void enqueue(std::string text)
    {
      constexpr std::size_t max_queued = 256;
      if(queue_.size() >= max_queued) queue_.erase(queue_.begin() + 1); // keep the one being written
      queue_.push_back(std::move(text));
      if(queue_.size() == 1) write();
    }

    void close()
    {
      boost::beast::error_code ec;
      ws_.next_layer().close(ec);
    }

  private:
    void read()
    {
      ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if(ec)
        {
          self->gone();
          return;
        }
        std::string text = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->server_.inbound_.try_push({ClientEvent::Kind::Message, self->id_, std::move(text)});
        self->read();
      });
    }

    void write()
    {
      ws_.async_write(boost::asio::buffer(queue_.front()),
                      [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        if(ec)
                        {
                          self->gone();
                          return;
                        }
                        self->queue_.pop_front();
                        if(!self->queue_.empty()) self->write();
                      });
    }

    void gone()
    {
      if(gone_) return;
      gone_ = true;
      server_.clients_.erase(id_);
      server_.inbound_.try_push({ClientEvent::Kind::Disconnected, id_, {}});
    }

    boost::beast::websocket::stream<tcp::socket> ws_;
    boost::beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    WsServer & server_;
    std::uint64_t id_;
    bool gone_ = false;
  };

  void accept()
  {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if(ec) return;
      std::make_shared<Client>(std::move(socket), *this, ++next_id_)->start();
      accept();
    });
  }

  Channel<ClientEvent> & inbound_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::map<std::uint64_t, std::shared_ptr<Client>> clients_;
  std::uint64_t next_id_ = 0;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopped_{false};
  std::thread thread_;
};

/// Route one client event into the session; returns the reply frame, if any.
inline std::optional<OutboundFrame> dispatch(LiveSession & session, const ClientEvent & ev)
{
  switch(ev.kind)
  {
    case ClientEvent::Kind::Connected: session.client_connected(); return std::nullopt;
    case ClientEvent::Kind::Disconnected: session.client_disconnected(); return std::nullopt;
    case ClientEvent::Kind::Message: break;
  }
  const ClientMessage msg = parse_client_message(ev.text);
  if(const auto * in = std::get_if<InputCommand>(&msg))
  {
    session.input(*in);
    return std::nullopt;
  }
  if(const auto * c = std::get_if<ControlCommand>(&msg)) return OutboundFrame{ev.client, session.control(*c)};
  return OutboundFrame{ev.client, error_message(std::get<ProtocolError>(msg).reason)};
}

struct TimingReport
{
  std::int64_t ticks = 0;
  std::int64_t overruns = 0;
  double median_jitter_ms = 0.0;
  double max_jitter_ms = 0.0;
};

/// Pace a LiveSession at 1 kHz against the monotonic clock until it finishes,
/// the writer fails, or stop_flag is raised. Simulation time stays
/// tick-count * 1 ms regardless of wall-clock slips.
template<class SendFn>
TimingReport drive_live(LiveSession & session, Channel<ClientEvent> & inbound, SendFn && send,
                        const std::atomic<bool> & stop_flag, const AsyncWriter * writer = nullptr)
{
  using clock = std::chrono::steady_clock;
  constexpr auto period = std::chrono::microseconds(1000);
  TimingReport rep;
  std::vector<float> jitter;
  jitter.reserve(1 << 16);
  auto deadline = clock::now();
  auto previous = deadline;
  while(!stop_flag.load() && !session.finished())
  {
    if(writer && writer->failed()) break;
    std::this_thread::sleep_until(deadline);
    const auto now = clock::now();
    if(now - deadline > period) session.note_overrun();
    if(rep.ticks > 0)
    {
      const double dt_ms = std::chrono::duration<double, std::milli>(now - previous).count();
      if(jitter.size() < jitter.capacity()) jitter.push_back(static_cast<float>(std::abs(dt_ms - 1.0)));
    }
    previous = now;

    for(const auto & ev : inbound.drain())
      if(auto reply = dispatch(session, ev)) send(std::move(*reply));
    session.tick();
    if(session.snapshot_due()) send(OutboundFrame{std::nullopt, to_json(session.snapshot()).dump()});
    ++rep.ticks;
    deadline += period;
  }
  rep.overruns = session.overruns_total();
  if(!jitter.empty())
  {
    auto mid = jitter.begin() + static_cast<std::ptrdiff_t>(jitter.size() / 2);
    std::nth_element(jitter.begin(), mid, jitter.end());
    rep.median_jitter_ms = *mid;
    rep.max_jitter_ms = *std::max_element(jitter.begin(), jitter.end());
  }
  return rep;
}

} // namespace tiltop
