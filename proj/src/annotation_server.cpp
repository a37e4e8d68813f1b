#include <httplib.h>

#include <thread>

#include "crux/annotation.hpp"
#include "crux/error.hpp"

namespace crux {

struct AnnotationServer::Impl {
    AnnotationService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(AnnotationService& s) : service(s) {}
};

namespace {

std::string bearer(const httplib::Request& req) {
    auto auth = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (auth.rfind(prefix, 0) == 0) return auth.substr(prefix.size());
    return req.get_header_value("X-Annotator-Token");
}

void send(httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svc = impl_->service;
    auto& srv = impl_->server;
    srv.Get("/tasks/next", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.next_task(req.get_param_value("annotator"), req.get_param_value("kind"), bearer(req)));
    });
    srv.Post(R"(/tasks/([^/]+)/t1)", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.submit_t1(req.matches[1].str(), req.body, bearer(req)));
    });
    srv.Post(R"(/tasks/([^/]+)/t2)", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.submit_t2(req.matches[1].str(), req.body, bearer(req)));
    });
    srv.Get("/stats/human-coverage",
            [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.human_coverage()); });
    srv.Get("/stats/judge-alignment",
            [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.judge_alignment()); });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void AnnotationServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void AnnotationServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace crux
