#include "fdct/study_http.hpp"

#include <thread>

#include <httplib.h>

#include "fdct/error.hpp"

namespace fdct::study {

using nlohmann::json;

struct StudyHttpServer::Impl {
    StudyService& service;
    std::string admin_token;
    httplib::Server server;
    std::thread worker;

    Impl(StudyService& s, std::string token) : service(s), admin_token(std::move(token)) {}
};

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw ValidationError("request body must be a JSON object");
        return j;
    } catch (const json::exception&) {
        throw ValidationError("request body is not valid JSON");
    }
}

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

int status_for(const std::exception& e) {
    if (dynamic_cast<const AuthError*>(&e)) return 401;
    if (dynamic_cast<const NotFoundError*>(&e)) return 404;
    if (dynamic_cast<const ConflictError*>(&e)) return 409;
    if (dynamic_cast<const ValidationError*>(&e)) return 400;
    return 500;
}

}  // namespace

StudyHttpServer::StudyHttpServer(StudyService& service, std::string admin_token)
    : impl_(std::make_unique<Impl>(service, std::move(admin_token))) {
    auto& srv = impl_->server;
    auto* self = impl_.get();

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            const int status = status_for(e);
            send_json(res, {{"error", status == 500 ? std::string("internal error") : std::string(e.what())}}, status);
        } catch (...) {
            send_json(res, {{"error", "internal error"}}, 500);
        }
    });

    srv.Post("/api/sessions", [self](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto rater = string_field(body, "rater_id");
        json items = json::array();
        for (const auto& a : self->service.create_session(rater)) {
            items.push_back(self->service.assignment_payload(a.assignment_id));
        }
        send_json(res, {{"rater_id", rater}, {"total", items.size()}, {"assignments", items}});
    });

    srv.Get(R"(/api/assignments/([0-9a-f]+))", [self](const httplib::Request& req, httplib::Response& res) {
        send_json(res, self->service.assignment_payload(req.matches[1].str()));
    });

    srv.Get(R"(/api/assignments/([0-9a-f]+)/slices/(\d{1,9}))", [self](const httplib::Request& req,
                                                                     httplib::Response& res) {
        const auto z = static_cast<std::size_t>(std::stoul(req.matches[2].str()));
        res.set_content(self->service.slice_png(req.matches[1].str(), z), "image/png");
        res.set_header("Cache-Control", "no-store");
    });

    srv.Post("/api/ratings", [self](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        RatingSubmission r;
        r.assignment_id = string_field(body, "assignment_id");
        r.client_token = string_field(body, "client_token");
        if (!body.contains("answers")) throw ValidationError("missing field 'answers'");
        r.answers = body["answers"];
        const auto ack = self->service.record_rating(r);
        send_json(res,
                  {{"status", "stored"},
                   {"assignment_id", ack.assignment_id},
                   {"client_token", ack.client_token},
                   {"submitted_at", ack.submitted_at},
                   {"sequence", ack.sequence}},
                  ack.replayed ? 200 : 201);
    });

    srv.Get("/api/questionnaire", [self](const httplib::Request&, httplib::Response& res) {
        send_json(res, to_json(self->service.definition().questionnaire));
    });

    srv.Get("/api/stats/agreement", [self](const httplib::Request& req, httplib::Response& res) {
        if (self->admin_token.empty() || req.get_header_value(kAdminHeader) != self->admin_token) {
            send_json(res, {{"error", "admin token required"}}, 403);
            return;
        }
        if (!req.has_param("question")) throw ValidationError("missing query parameter 'question'");
        send_json(res, to_json(self->service.compute_agreement(req.get_param_value("question"))));
    });
}

StudyHttpServer::~StudyHttpServer() { stop(); }

int StudyHttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void StudyHttpServer::listen() { impl_->server.listen_after_bind(); }

int StudyHttpServer::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->worker = std::thread([this] { listen(); });
    impl_->server.wait_until_ready();
    return bound;
}

void StudyHttpServer::stop() {
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace fdct::study
