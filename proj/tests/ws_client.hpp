#pragma once

// Minimal blocking WebSocket client for driving the HIL server in tests.

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

class WsClient {
public:
    WsClient(const std::string& host, unsigned short port) : ws_(ioc_) {
        boost::asio::ip::tcp::resolver resolver(ioc_);
        auto results = resolver.resolve(host, std::to_string(port));
        boost::beast::get_lowest_layer(ws_).connect(results);
        ws_.handshake(host, "/");
        ws_.text(true);
    }

    ~WsClient() {
        boost::beast::error_code ec;
        ws_.close(boost::beast::websocket::close_code::normal, ec);
    }

    void send(const std::string& line) { ws_.write(boost::asio::buffer(line + "\n")); }

    /// Next frame split into its lines; empty on timeout.
    std::vector<std::string> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
        boost::beast::get_lowest_layer(ws_).expires_after(timeout);
        boost::beast::flat_buffer buffer;
        boost::beast::error_code ec;
        ws_.read(buffer, ec);
        boost::beast::get_lowest_layer(ws_).expires_never();
        std::vector<std::string> lines;
        if (ec) return lines;
        const std::string data = boost::beast::buffers_to_string(buffer.data());
        std::size_t begin = 0;
        while (begin < data.size()) {
            auto end = data.find('\n', begin);
            if (end == std::string::npos) end = data.size();
            if (end > begin) lines.push_back(data.substr(begin, end - begin));
            begin = end + 1;
        }
        return lines;
    }

private:
    boost::asio::io_context ioc_;
    boost::beast::websocket::stream<boost::beast::tcp_stream> ws_;
};
