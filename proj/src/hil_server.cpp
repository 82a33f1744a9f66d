#include "sharedctl/hil_server.hpp"

#include <deque>
#include <set>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace sharedctl {
namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class Connection;

struct Registry {
    std::set<std::shared_ptr<Connection>> connections;
    std::atomic<std::size_t> count{0};
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, HilSession& session, Registry& registry)
        : ws_(std::move(socket)), session_(session), registry_(registry) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->registry_.connections.insert(self);
            self->registry_.count = self->registry_.connections.size();
            self->read();
        });
    }

    void send(std::shared_ptr<const std::string> frame) {
        if (closed_) return;
        // Keep the frame being written; drop the oldest waiting one.
        if (queue_.size() >= HilServer::kQueueLimit) {
            queue_.erase(queue_.begin() + (writing_ ? 1 : 0));
            session_.count_dropped_frame();
        }
        queue_.push_back(std::move(frame));
        if (!writing_) write();
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->drop();
                return;
            }
            const std::string data = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            std::size_t begin = 0;
            while (begin <= data.size()) {
                std::size_t end = data.find('\n', begin);
                if (end == std::string::npos) end = data.size();
                std::string_view line(data.data() + begin, end - begin);
                if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
                if (!line.empty()) self->session_.handle_line(line);
                begin = end + 1;
            }
            self->read();
        });
    }

    void write() {
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()),
                        [self = shared_from_this()](beast::error_code ec, std::size_t) {
                            self->queue_.pop_front();
                            if (ec) {
                                self->writing_ = false;
                                self->drop();
                                return;
                            }
                            if (self->queue_.empty()) {
                                self->writing_ = false;
                            } else {
                                self->write();
                            }
                        });
    }

    void drop() {
        closed_ = true;
        registry_.connections.erase(shared_from_this());
        registry_.count = registry_.connections.size();
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool writing_ = false;
    bool closed_ = false;
    HilSession& session_;
    Registry& registry_;
};

} // namespace

struct HilServer::Impl {
    HilSession& session;
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    Registry registry;
    std::thread thread;
    bool started = false;

    explicit Impl(HilSession& s) : session(s) {}

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), session, registry)->start();
            accept();
        });
    }

    void broadcast(const std::string& line) {
        auto frame = std::make_shared<const std::string>(line + "\n");
        net::post(ioc, [this, frame] {
            const auto snapshot = registry.connections;
            for (const auto& c : snapshot) c->send(frame);
        });
    }
};

HilServer::HilServer(HilSession& session, const std::string& host, unsigned short port)
    : impl_(std::make_unique<Impl>(session)) {
    try {
        const tcp::endpoint ep(net::ip::make_address(host), port);
        impl_->acceptor.open(ep.protocol());
        impl_->acceptor.set_option(net::socket_base::reuse_address(true));
        impl_->acceptor.bind(ep);
        impl_->acceptor.listen();
    } catch (const std::exception& e) {
        throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port) + ": " + e.what());
    }
    session.set_sink([impl = impl_.get()](const std::string& line) { impl->broadcast(line); });
}

HilServer::~HilServer() {
    stop();
    impl_->session.set_sink({});
}

unsigned short HilServer::port() const { return impl_->acceptor.local_endpoint().port(); }

std::size_t HilServer::clients() const { return impl_->registry.count.load(); }

void HilServer::start() {
    if (impl_->started) return;
    impl_->started = true;
    impl_->accept();
    impl_->thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

void HilServer::stop() {
    if (!impl_->started) return;
    impl_->started = false;
    net::post(impl_->ioc, [impl = impl_.get()] {
        beast::error_code ec;
        impl->acceptor.close(ec);
        const auto snapshot = impl->registry.connections;
        for (const auto& c : snapshot) c->close();
        impl->ioc.stop();
    });
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->registry.connections.clear();
    impl_->registry.count = 0;
}

std::pair<std::string, unsigned short> parse_bind_address(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
        throw Error(ErrorCode::Config, "bind address must look like host:port");
    }
    const std::string host = bind.substr(0, colon);
    const std::string port_text = bind.substr(colon + 1);
    char* end = nullptr;
    const long port = std::strtol(port_text.c_str(), &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) {
        throw Error(ErrorCode::Config, "invalid port in bind address '" + bind + "'");
    }
    return {host, static_cast<unsigned short>(port)};
}

} // namespace sharedctl
