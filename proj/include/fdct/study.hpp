#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdct/questionnaire.hpp"
#include "fdct/volume.hpp"

namespace fdct::study {

/// The three modalities every study case is read in.
inline constexpr Modality kStudyModalities[] = {Modality::FDCT, Modality::MDCT, Modality::Prediction};

struct StudyCase {
    std::string case_id;
    std::map<Modality, HUVolume> volumes;
};

struct StudyDefinition {
    std::vector<StudyCase> cases;
    Questionnaire questionnaire;
    std::uint64_t blinding_seed = 0;
    std::vector<std::string> raters;
    WindowSpec window;

    /// Every case carries exactly FDCT, MDCT and PREDICTION; case ids,
    /// question ids and rater ids are unique.
    void validate() const;
    const StudyCase& find_case(const std::string& case_id) const;
};

/// Study config file:
///   {"blinding_seed": 17, "raters": ["r1", "r2"],
///    "cases": [{"case_id": "c1", "volumes": {"FDCT": "c1/fdct", "MDCT": ..., "PREDICTION": ...}}],
///    "questionnaire": {...} (optional, default schema otherwise),
///    "window": {"level": 50, "width": 100} (optional),
///    "admin_token": "..." (optional), "log": "ratings.jsonl" (optional)}
/// Volume paths are relative to data_root.
struct StudyConfig {
    StudyDefinition definition;
    std::string admin_token;
    std::filesystem::path log_path;
};

StudyConfig load_study_config(const std::filesystem::path& config_file, const std::filesystem::path& data_root);

/// (case index, modality) pairs in reading order for one rater. The order is a
/// deterministic function of (blinding_seed, rater_id): each round reads every
/// case once, case order is reshuffled per round and rounds never start with
/// the case the previous round ended on when that can be avoided.
std::vector<std::pair<std::size_t, Modality>> reading_order(std::size_t n_cases, std::uint64_t blinding_seed,
                                                            const std::string& rater_id);

/// Server-side record; modality is never sent to clients.
struct Assignment {
    std::string assignment_id;
    std::string rater_id;
    std::string case_id;
    Modality modality = Modality::FDCT;
    std::size_t display_order = 0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct RatingSubmission {
    std::string assignment_id;
    nlohmann::json answers = nlohmann::json::object();  // question id -> answer or null
    std::string client_token;
};

struct StoredRating {
    std::string assignment_id;
    nlohmann::json answers;
    std::string client_token;
    std::string submitted_at;
    std::uint64_t sequence = 0;

    friend bool operator==(const StoredRating&, const StoredRating&) = default;
};

struct RatingAck {
    std::string assignment_id;
    std::string client_token;
    std::string submitted_at;
    std::uint64_t sequence = 0;
    bool replayed = false;  // true when the token matched an earlier submission
};

/// Full in-memory state; rebuilt from the log on startup.
struct StudyState {
    std::map<std::string, Assignment> assignments;               // by assignment id
    std::map<std::string, std::vector<std::string>> sessions;    // rater -> ids in reading order
    std::map<std::string, StoredRating> ratings;                 // by assignment id
    std::uint64_t sequence = 0;

    friend bool operator==(const StudyState&, const StudyState&) = default;
};

/// Agreement between two label sequences of equal length.
struct PairAgreement {
    std::size_t n = 0;
    double observed = 0.0;  // po
    double expected = 0.0;  // pe
    std::optional<double> kappa;  // nullopt when pe == 1
};

PairAgreement cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Kappa from a square contingency table counts[i][j] (rater A label i, rater B label j).
PairAgreement cohen_kappa_table(const std::vector<std::vector<double>>& counts);

struct ModalityAgreement {
    Modality modality = Modality::FDCT;
    bool sufficient = false;
    std::size_t raters = 0;
    std::size_t pairs = 0;  // compared (rater pair, case) items
    double percent_agreement = 0.0;
    std::optional<double> kappa;  // mean over rater pairs with defined kappa
};

struct AgreementReport {
    std::string question_id;
    std::vector<ModalityAgreement> per_modality;
};

nlohmann::json to_json(const AgreementReport& r);

/// Reader-study backend. Mutations are serialized and appended to a JSON-lines
/// log before they become visible; readers work on immutable snapshots.
class StudyService {
public:
    /// Replays log_path when it exists. An empty path keeps everything in memory.
    StudyService(StudyDefinition definition, std::filesystem::path log_path);

    const StudyDefinition& definition() const { return def_; }

    /// Returns the rater's assignments in reading order, creating them on first call.
    std::vector<Assignment> create_session(const std::string& rater_id);

    std::optional<Assignment> find_assignment(const std::string& assignment_id) const;
    /// Client-safe description: id, display order, slice count and tile size.
    nlohmann::json assignment_payload(const std::string& assignment_id) const;
    /// PNG tile of slice z.
    std::string slice_png(const std::string& assignment_id, std::size_t z) const;

    RatingAck record_rating(const RatingSubmission& r);

    AgreementReport compute_agreement(const std::string& question_id) const;

    std::shared_ptr<const StudyState> snapshot() const;

private:
    void replay();
    void append(const nlohmann::json& record);
    void publish(std::shared_ptr<const StudyState> next);
    const HUVolume& volume_of(const Assignment& a) const;

    StudyDefinition def_;
    std::filesystem::path log_path_;
    std::mutex write_mutex_;
    std::shared_ptr<const StudyState> state_;
};

}  // namespace fdct::study
