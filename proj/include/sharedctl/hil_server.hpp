#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <thread>

#include "sharedctl/hil_session.hpp"

namespace sharedctl {

/// WebSocket front end of a session. Every frame carries newline-delimited
/// JSON objects. Each client has a bounded outbound queue; when it is full
/// the oldest queued frame is dropped and counted.
class HilServer {
public:
    static constexpr std::size_t kQueueLimit = 256;

    /// Binds immediately; port 0 picks a free port. Throws Error(Io) on bind failure.
    HilServer(HilSession& session, const std::string& host, unsigned short port);
    ~HilServer();

    HilServer(const HilServer&) = delete;
    HilServer& operator=(const HilServer&) = delete;

    [[nodiscard]] unsigned short port() const;
    [[nodiscard]] std::size_t clients() const;

    /// Serves on a background thread until `stop`.
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws Error(Config) when malformed.
std::pair<std::string, unsigned short> parse_bind_address(const std::string& bind);

} // namespace sharedctl
