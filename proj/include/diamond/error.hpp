#ifndef DIAMOND_ERROR_HPP
#define DIAMOND_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace diamond {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. `record` is the 0-based record index, or -1 when the
/// failure is not tied to a record.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, long record = -1)
        : Error(what), record_(record) {}
    long record() const noexcept { return record_; }

  private:
    long record_;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// The backend cannot perform the requested operation (e.g. no hidden states).
class CapabilityError : public Error {
  public:
    using Error::Error;
};

/// Could not reach a remote backend.
class TransportError : public Error {
  public:
    using Error::Error;
};

/// A remote backend answered with something that violates the wire protocol.
class ProtocolError : public Error {
  public:
    ProtocolError(const std::string& what, std::uint64_t request_id)
        : Error(what + " (request " + std::to_string(request_id) + ")"),
          request_id_(request_id) {}
    std::uint64_t request_id() const noexcept { return request_id_; }

  private:
    std::uint64_t request_id_;
};

/// s(A) too close to zero for the IFD ratio to be meaningful.
class DegenerateDirectScore : public Error {
  public:
    DegenerateDirectScore(double s_cond, double s_direct)
        : Error("direct answer score " + std::to_string(s_direct) +
                " below floor (conditioned score " + std::to_string(s_cond) + ")"),
          s_cond_(s_cond), s_direct_(s_direct) {}
    double s_cond() const noexcept { return s_cond_; }
    double s_direct() const noexcept { return s_direct_; }

  private:
    double s_cond_;
    double s_direct_;
};

/// Cosine similarity against a zero-norm embedding.
class ZeroEmbedding : public Error {
  public:
    ZeroEmbedding(const std::string& variant)
        : Error("zero-norm output embedding for variant " + variant), variant_(variant) {}
    const std::string& variant() const noexcept { return variant_; }

  private:
    std::string variant_;
};

} // namespace diamond

#endif // DIAMOND_ERROR_HPP
