#pragma once

#include <memory>
#include <string>

#include "fdct/study.hpp"

namespace fdct::study {

/// JSON/PNG HTTP front end of a StudyService.
///   POST /api/sessions                      {"rater_id"} -> assignments in reading order
///   GET  /api/assignments/{id}              -> assignment metadata
///   GET  /api/assignments/{id}/slices/{z}   -> image/png tile
///   POST /api/ratings                       {"assignment_id", "answers", "client_token"}
///   GET  /api/questionnaire                 -> question schema
///   GET  /api/stats/agreement?question=ID   -> agreement report (X-Study-Admin header)
/// The agreement report is the only body that names modalities, so it is
/// refused unless the request carries the configured admin token.
class StudyHttpServer {
public:
    StudyHttpServer(StudyService& service, std::string admin_token);
    ~StudyHttpServer();
    StudyHttpServer(const StudyHttpServer&) = delete;
    StudyHttpServer& operator=(const StudyHttpServer&) = delete;

    /// Binds to host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    /// bind() plus listen() on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

inline constexpr const char* kAdminHeader = "X-Study-Admin";

}  // namespace fdct::study
