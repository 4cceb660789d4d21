#ifndef DIAMOND_REMOTE_BACKEND_HPP
#define DIAMOND_REMOTE_BACKEND_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "diamond/lm_backend.hpp"

namespace httplib {
class Server;
}

namespace diamond {

inline constexpr int kWireProtocolVersion = 1;

/// Client for the JSON-over-HTTP backend protocol:
///
///   GET  /v1/descriptor -> {name, max_sequence_tokens, embedding_dim, supports_embeddings}
///   POST /v1/score      {context, continuation} -> {tokens, logprobs, truncated}
///   POST /v1/generate   {prompt, max_new_tokens} -> {text}
///   POST /v1/embed      {text} -> {e_first, e_last}
///
/// Every request carries an X-Request-Id header; a server that echoes it
/// back must echo the same value. At most `max_in_flight` requests are
/// outstanding at once, and transport failures are retried twice.
class RemoteBackend final : public LmBackend {
  public:
    /// Performs the descriptor handshake; throws TransportError or ProtocolError.
    RemoteBackend(std::string endpoint_url, std::chrono::milliseconds timeout,
                  std::size_t max_in_flight);

    BackendDescriptor descriptor() const override { return descriptor_; }
    TokenLogprobs score_continuation(std::string_view context,
                                     std::string_view continuation) const override;
    std::string generate(std::string_view prompt, std::size_t max_new_tokens) const override;
    EmbeddingPair embed(std::string_view text) const override;

    const std::string& endpoint() const noexcept { return endpoint_; }

  private:
    struct Reply;
    Reply call(const std::string& method, const std::string& path, const std::string& body) const;

    std::string endpoint_;
    std::string scheme_host_port_;
    std::string base_path_;
    std::chrono::milliseconds timeout_;
    std::size_t max_in_flight_;
    BackendDescriptor descriptor_;

    mutable std::mutex mutex_;
    mutable std::condition_variable slot_free_;
    mutable std::size_t in_flight_ = 0;
    mutable std::atomic<std::uint64_t> next_request_id_{1};
};

std::unique_ptr<LmBackend> remote_backend(const std::string& endpoint_url,
                                          std::chrono::milliseconds timeout,
                                          std::size_t max_in_flight);

/// Serves any LmBackend over the wire protocol on a background thread.
class BackendServer {
  public:
    /// port 0 binds an ephemeral port.
    BackendServer(const LmBackend& backend, std::string host = "127.0.0.1", int port = 0);
    ~BackendServer();
    BackendServer(const BackendServer&) = delete;
    BackendServer& operator=(const BackendServer&) = delete;

    int port() const noexcept { return port_; }
    std::string url() const;
    /// Blocks until stop() is called from another thread.
    void wait();
    void stop();

  private:
    const LmBackend& backend_;
    std::string host_;
    int port_ = 0;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

} // namespace diamond

#endif // DIAMOND_REMOTE_BACKEND_HPP
