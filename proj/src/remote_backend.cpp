#include "diamond/remote_backend.hpp"

#include <cmath>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diamond/error.hpp"

namespace diamond {

using nlohmann::json;

struct RemoteBackend::Reply {
    json body;
    std::uint64_t request_id = 0;
};

namespace {

constexpr int kMaxAttempts = 3; // first try plus two retries
constexpr const char* kRequestIdHeader = "X-Request-Id";

class SlotGuard {
  public:
    SlotGuard(std::mutex& m, std::condition_variable& cv, std::size_t& in_flight,
              std::size_t limit)
        : m_(m), cv_(cv), in_flight_(in_flight)
    {
        std::unique_lock lock(m_);
        cv_.wait(lock, [&] { return in_flight_ < limit; });
        ++in_flight_;
    }
    ~SlotGuard()
    {
        {
            std::lock_guard lock(m_);
            --in_flight_;
        }
        cv_.notify_one();
    }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

  private:
    std::mutex& m_;
    std::condition_variable& cv_;
    std::size_t& in_flight_;
};

std::vector<double> number_array(const json& body, const char* key, std::uint64_t id)
{
    auto it = body.find(key);
    if (it == body.end() || !it->is_array())
        throw ProtocolError(std::string("missing array \"") + key + "\"", id);
    std::vector<double> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_number())
            throw ProtocolError(std::string("non-numeric entry in \"") + key + "\"", id);
        const double d = v.get<double>();
        if (!std::isfinite(d))
            throw ProtocolError(std::string("non-finite entry in \"") + key + "\"", id);
        out.push_back(d);
    }
    return out;
}

} // namespace

RemoteBackend::RemoteBackend(std::string endpoint_url, std::chrono::milliseconds timeout,
                             std::size_t max_in_flight)
    : endpoint_(std::move(endpoint_url)), timeout_(timeout), max_in_flight_(max_in_flight)
{
    if (max_in_flight_ == 0)
        throw ValidationError("max_in_flight must be positive");
    static const std::regex url_re(R"(^(https?://[^/\s]+)(/[^\s]*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint_, m, url_re))
        throw ValidationError("malformed endpoint URL '" + endpoint_ + "'");
    scheme_host_port_ = m[1].str();
    base_path_ = m[2].matched ? m[2].str() : std::string();
    while (!base_path_.empty() && base_path_.back() == '/')
        base_path_.pop_back();

    const Reply reply = call("GET", "/v1/descriptor", {});
    const json& d = reply.body;
    try {
        if (d.contains("protocol_version") &&
            d["protocol_version"].get<int>() != kWireProtocolVersion)
            throw ProtocolError("protocol-version mismatch: server speaks " +
                                    d["protocol_version"].dump() + ", client speaks " +
                                    std::to_string(kWireProtocolVersion),
                                reply.request_id);
        descriptor_.name = d.at("name").get<std::string>();
        descriptor_.max_sequence_tokens = d.at("max_sequence_tokens").get<std::size_t>();
        descriptor_.embedding_dim = d.at("embedding_dim").get<std::size_t>();
        descriptor_.supports_embeddings = d.at("supports_embeddings").get<bool>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("bad descriptor: ") + e.what(), reply.request_id);
    }
    if (descriptor_.max_sequence_tokens < 8)
        throw ProtocolError("descriptor max_sequence_tokens below 8", reply.request_id);
}

RemoteBackend::Reply RemoteBackend::call(const std::string& method, const std::string& path,
                                         const std::string& body) const
{
    const std::uint64_t id = next_request_id_.fetch_add(1);
    const std::string id_text = std::to_string(id);
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
        SlotGuard slot(mutex_, slot_free_, in_flight_, max_in_flight_);
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            httplib::Client client(scheme_host_port_);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
            const auto usecs =
                std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
            client.set_connection_timeout(secs.count(), usecs.count());
            client.set_read_timeout(secs.count(), usecs.count());
            client.set_write_timeout(secs.count(), usecs.count());
            httplib::Headers headers{{kRequestIdHeader, id_text}};
            const std::string full = base_path_ + path;
            res = method == "GET" ? client.Get(full, headers)
                                  : client.Post(full, headers, body, "application/json");
            if (res)
                break;
        }
    }
    if (!res)
        throw TransportError("backend " + endpoint_ + " unreachable: " +
                             httplib::to_string(res.error()));
    if (res->status != 200) {
        std::string msg = "HTTP " + std::to_string(res->status) + " from " + path;
        try {
            msg += ": " + json::parse(res->body).at("error").get<std::string>();
        } catch (const json::exception&) {
        }
        if (res->status == 501)
            throw CapabilityError(msg);
        throw ProtocolError(msg, id);
    }
    if (res->has_header(kRequestIdHeader) && res->get_header_value(kRequestIdHeader) != id_text)
        throw ProtocolError("response carries request id " +
                                res->get_header_value(kRequestIdHeader),
                            id);
    Reply reply;
    reply.request_id = id;
    try {
        reply.body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("invalid JSON body: ") + e.what(), id);
    }
    if (!reply.body.is_object())
        throw ProtocolError("response body is not an object", id);
    return reply;
}

TokenLogprobs RemoteBackend::score_continuation(std::string_view context,
                                                std::string_view continuation) const
{
    const json req = {{"context", context}, {"continuation", continuation}};
    const Reply reply = call("POST", "/v1/score", req.dump());
    TokenLogprobs out;
    try {
        out.tokens = reply.body.at("tokens").get<std::vector<std::string>>();
        out.truncated = reply.body.value("truncated", false);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("bad score response: ") + e.what(), reply.request_id);
    }
    out.logprobs = number_array(reply.body, "logprobs", reply.request_id);
    try {
        out.validate();
    } catch (const ValidationError& e) {
        throw ProtocolError(e.what(), reply.request_id);
    }
    if (out.tokens.empty())
        throw ProtocolError("zero continuation tokens", reply.request_id);
    return out;
}

std::string RemoteBackend::generate(std::string_view prompt, std::size_t max_new_tokens) const
{
    const json req = {{"prompt", prompt}, {"max_new_tokens", max_new_tokens}};
    const Reply reply = call("POST", "/v1/generate", req.dump());
    auto it = reply.body.find("text");
    if (it == reply.body.end() || !it->is_string())
        throw ProtocolError("generate response lacks \"text\"", reply.request_id);
    return it->get<std::string>();
}

EmbeddingPair RemoteBackend::embed(std::string_view text) const
{
    if (!descriptor_.supports_embeddings)
        throw CapabilityError("backend " + descriptor_.name + " does not expose hidden states");
    const json req = {{"text", text}};
    const Reply reply = call("POST", "/v1/embed", req.dump());
    const auto first = number_array(reply.body, "e_first", reply.request_id);
    const auto last = number_array(reply.body, "e_last", reply.request_id);
    if (first.size() != last.size() || first.empty() ||
        (descriptor_.embedding_dim != 0 && first.size() != descriptor_.embedding_dim))
        throw ProtocolError("embedding dimensions disagree with descriptor", reply.request_id);
    EmbeddingPair pair;
    pair.e_first = Eigen::Map<const Eigen::VectorXd>(first.data(), static_cast<Eigen::Index>(first.size()));
    pair.e_last = Eigen::Map<const Eigen::VectorXd>(last.data(), static_cast<Eigen::Index>(last.size()));
    return pair;
}

std::unique_ptr<LmBackend> remote_backend(const std::string& endpoint_url,
                                          std::chrono::milliseconds timeout,
                                          std::size_t max_in_flight)
{
    return std::make_unique<RemoteBackend>(endpoint_url, timeout, max_in_flight);
}

// ---------------------------------------------------------------------------

BackendServer::BackendServer(const LmBackend& backend, std::string host, int port)
    : backend_(backend), host_(std::move(host)), server_(std::make_unique<httplib::Server>())
{
    auto& srv = *server_;
    srv.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
        if (req.has_header(kRequestIdHeader))
            res.set_header(kRequestIdHeader, req.get_header_value(kRequestIdHeader));
        return httplib::Server::HandlerResponse::Unhandled;
    });

    auto guarded = [](auto&& fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                const json in = req.body.empty() ? json::object() : json::parse(req.body);
                res.set_content(fn(in).dump(), "application/json");
            } catch (const CapabilityError& e) {
                res.status = 501;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        };
    };

    srv.Get("/v1/descriptor", guarded([this](const json&) {
                const auto d = backend_.descriptor();
                return json{{"name", d.name},
                            {"max_sequence_tokens", d.max_sequence_tokens},
                            {"embedding_dim", d.embedding_dim},
                            {"supports_embeddings", d.supports_embeddings},
                            {"protocol_version", kWireProtocolVersion}};
            }));
    srv.Post("/v1/score", guarded([this](const json& in) {
                 const auto lp = backend_.score_continuation(in.at("context").get<std::string>(),
                                                             in.at("continuation").get<std::string>());
                 return json{{"tokens", lp.tokens}, {"logprobs", lp.logprobs}, {"truncated", lp.truncated}};
             }));
    srv.Post("/v1/generate", guarded([this](const json& in) {
                 return json{{"text", backend_.generate(in.at("prompt").get<std::string>(),
                                                        in.at("max_new_tokens").get<std::size_t>())}};
             }));
    srv.Post("/v1/embed", guarded([this](const json& in) {
                 const auto pair = backend_.embed(in.at("text").get<std::string>());
                 std::vector<double> f(pair.e_first.data(), pair.e_first.data() + pair.e_first.size());
                 std::vector<double> l(pair.e_last.data(), pair.e_last.data() + pair.e_last.size());
                 return json{{"e_first", f}, {"e_last", l}};
             }));

    if (port == 0) {
        port_ = srv.bind_to_any_port(host_);
    } else {
        port_ = srv.bind_to_port(host_, port) ? port : -1;
    }
    if (port_ < 0)
        throw IoError("cannot bind " + host_ + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

BackendServer::~BackendServer()
{
    stop();
}

std::string BackendServer::url() const
{
    return "http://" + host_ + ":" + std::to_string(port_);
}

void BackendServer::wait()
{
    while (server_ && server_->is_running())
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void BackendServer::stop()
{
    if (server_)
        server_->stop();
    if (thread_.joinable())
        thread_.join();
}

} // namespace diamond
