#include "fdct/study.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "fdct/error.hpp"
#include "fdct/png.hpp"
#include "fdct/seed.hpp"
#include "fdct/volume_io.hpp"

namespace fdct::study {

namespace fs = std::filesystem;
using nlohmann::json;

void StudyDefinition::validate() const {
    if (cases.empty()) throw ValidationError("study has no cases");
    if (raters.empty()) throw ValidationError("study has no raters");
    questionnaire.validate();
    window.validate();
    std::set<std::string> ids;
    for (const auto& c : cases) {
        if (!ids.insert(c.case_id).second) throw ValidationError("duplicate study case '" + c.case_id + "'");
        if (c.volumes.size() != std::size(kStudyModalities)) {
            throw ValidationError("study case '" + c.case_id + "' must have exactly three volumes");
        }
        for (auto m : kStudyModalities) {
            if (!c.volumes.contains(m)) {
                throw ValidationError("study case '" + c.case_id + "' lacks a volume");
            }
        }
    }
    std::set<std::string> rater_ids(raters.begin(), raters.end());
    if (rater_ids.size() != raters.size()) throw ValidationError("duplicate rater id");
}

const StudyCase& StudyDefinition::find_case(const std::string& case_id) const {
    for (const auto& c : cases) {
        if (c.case_id == case_id) return c;
    }
    throw NotFoundError("unknown study case '" + case_id + "'");
}

StudyConfig load_study_config(const fs::path& config_file, const fs::path& data_root) {
    std::ifstream in(config_file);
    if (!in) throw IoError("cannot read study config " + config_file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigurationError("malformed study config: " + std::string(e.what()));
    }
    StudyConfig cfg;
    auto& def = cfg.definition;
    try {
        def.blinding_seed = j.at("blinding_seed").get<std::uint64_t>();
        def.raters = j.at("raters").get<std::vector<std::string>>();
        def.questionnaire = j.contains("questionnaire") ? questionnaire_from_json(j.at("questionnaire"))
                                                        : default_questionnaire();
        if (j.contains("window")) def.window = {j["window"].at("level").get<double>(), j["window"].at("width").get<double>()};
        for (const auto& c : j.at("cases")) {
            StudyCase sc;
            sc.case_id = c.at("case_id").get<std::string>();
            for (const auto& [name, rel] : c.at("volumes").items()) {
                const auto m = modality_from_string(name);
                auto vol = load_volume(data_root / rel.get<std::string>());
                vol.set_modality(m);
                vol.set_case_id(sc.case_id);
                sc.volumes.emplace(m, std::move(vol));
            }
            def.cases.push_back(std::move(sc));
        }
        cfg.admin_token = j.value("admin_token", "");
        const fs::path log = j.value("log", "ratings.jsonl");
        cfg.log_path = log.is_absolute() ? log : data_root / log;
    } catch (const json::exception& e) {
        throw ConfigurationError("incomplete study config: " + std::string(e.what()));
    }
    def.validate();
    return cfg;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string random_id() {
    std::random_device rd;
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 8; ++i) {
        auto word = rd();
        for (int k = 0; k < 4; ++k) {
            id += hex[(word >> (8 * k + 4)) & 0xF];
            id += hex[(word >> (8 * k)) & 0xF];
        }
    }
    return id;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

void apply_record(StudyState& st, const json& rec, const StudyDefinition& def) {
    const auto type = rec.at("type").get<std::string>();
    if (type == "session") {
        const auto rater = rec.at("rater_id").get<std::string>();
        auto& ids = st.sessions[rater];
        for (const auto& a : rec.at("assignments")) {
            Assignment x{a.at("assignment_id").get<std::string>(), rater, a.at("case_id").get<std::string>(),
                         modality_from_string(a.at("modality").get<std::string>()),
                         a.at("display_order").get<std::size_t>()};
            def.find_case(x.case_id);
            ids.push_back(x.assignment_id);
            st.assignments.emplace(x.assignment_id, std::move(x));
        }
    } else if (type == "rating") {
        StoredRating r{rec.at("assignment_id").get<std::string>(), rec.at("answers"),
                       rec.at("client_token").get<std::string>(), rec.at("submitted_at").get<std::string>(),
                       rec.at("sequence").get<std::uint64_t>()};
        if (!st.assignments.contains(r.assignment_id)) throw IoError("rating log references an unknown assignment");
        st.sequence = std::max(st.sequence, r.sequence);
        st.ratings[r.assignment_id] = std::move(r);
    } else {
        throw IoError("unknown rating log record type '" + type + "'");
    }
}

}  // namespace

std::vector<std::pair<std::size_t, Modality>> reading_order(std::size_t n_cases, std::uint64_t blinding_seed,
                                                            const std::string& rater_id) {
    Rng rng(derive_seed(blinding_seed, fnv1a(rater_id)));
    const std::size_t rounds = std::size(kStudyModalities);
    std::vector<std::vector<Modality>> per_case(n_cases);
    for (auto& mods : per_case) {
        mods.assign(std::begin(kStudyModalities), std::end(kStudyModalities));
        rng.shuffle(mods.begin(), mods.end());
    }
    std::vector<std::pair<std::size_t, Modality>> order;
    order.reserve(n_cases * rounds);
    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<std::size_t> cases(n_cases);
        std::iota(cases.begin(), cases.end(), std::size_t{0});
        rng.shuffle(cases.begin(), cases.end());
        if (!order.empty() && n_cases > 1 && cases.front() == order.back().first) {
            std::swap(cases[0], cases[1 + rng.index(n_cases - 1)]);
        }
        for (auto c : cases) order.emplace_back(c, per_case[c][r]);
    }
    return order;
}

PairAgreement cohen_kappa_table(const std::vector<std::vector<double>>& counts) {
    const std::size_t k = counts.size();
    for (const auto& row : counts) {
        if (row.size() != k) throw ValidationError("contingency table must be square");
    }
    double n = 0.0, agree = 0.0, chance = 0.0;
    std::vector<double> rows(k, 0.0), cols(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[i][j] < 0) throw ValidationError("negative contingency count");
            n += counts[i][j];
            rows[i] += counts[i][j];
            cols[j] += counts[i][j];
        }
        agree += counts[i][i];
    }
    PairAgreement out;
    out.n = static_cast<std::size_t>(n);
    if (n == 0.0) return out;
    for (std::size_t i = 0; i < k; ++i) chance += rows[i] * cols[i];
    out.observed = agree / n;
    out.expected = chance / (n * n);
    // Integer-count form keeps hand-worked tables exact.
    if (n * n != chance) out.kappa = (n * agree - chance) / (n * n - chance);
    return out;
}

PairAgreement cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.size() != b.size()) throw ValidationError("rater label sequences differ in length");
    std::vector<std::string> labels(a.begin(), a.end());
    labels.insert(labels.end(), b.begin(), b.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    auto idx = [&](const std::string& s) {
        return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), s) - labels.begin());
    };
    std::vector<std::vector<double>> table(labels.size(), std::vector<double>(labels.size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) table[idx(a[i])][idx(b[i])] += 1.0;
    return cohen_kappa_table(table);
}

json to_json(const AgreementReport& r) {
    json per = json::array();
    for (const auto& m : r.per_modality) {
        json e{{"modality", to_string(m.modality)}, {"sufficient", m.sufficient}, {"raters", m.raters},
               {"compared_pairs", m.pairs}};
        if (m.sufficient) {
            e["percent_agreement"] = m.percent_agreement;
            e["cohen_kappa"] = m.kappa ? json(*m.kappa) : json(nullptr);
        } else {
            e["percent_agreement"] = nullptr;
            e["cohen_kappa"] = nullptr;
            e["reason"] = "fewer than two raters answered this question for a shared case";
        }
        per.push_back(std::move(e));
    }
    return {{"question_id", r.question_id}, {"per_modality", per}};
}

StudyService::StudyService(StudyDefinition definition, fs::path log_path)
    : def_(std::move(definition)), log_path_(std::move(log_path)), state_(std::make_shared<const StudyState>()) {
    def_.validate();
    replay();
}

void StudyService::replay() {
    if (log_path_.empty() || !fs::exists(log_path_)) return;
    std::ifstream in(log_path_);
    if (!in) throw IoError("cannot read rating log " + log_path_.string());
    auto st = std::make_shared<StudyState>();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception&) {
            // A torn final line is what a crash mid-append leaves behind.
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw IoError("rating log line " + std::to_string(lineno) + " is not valid JSON");
        }
        try {
            apply_record(*st, rec, def_);
        } catch (const json::exception& e) {
            throw IoError("rating log line " + std::to_string(lineno) + ": " + e.what());
        } catch (const NotFoundError& e) {
            throw IoError("rating log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    publish(std::move(st));
}

void StudyService::append(const json& record) {
    if (log_path_.empty()) return;
    if (log_path_.has_parent_path()) fs::create_directories(log_path_.parent_path());
    std::ofstream out(log_path_, std::ios::app);
    out << record.dump() << "\n";
    out.flush();
    if (!out) throw IoError("cannot append to rating log " + log_path_.string());
}

void StudyService::publish(std::shared_ptr<const StudyState> next) { std::atomic_store(&state_, std::move(next)); }

std::shared_ptr<const StudyState> StudyService::snapshot() const { return std::atomic_load(&state_); }

std::vector<Assignment> StudyService::create_session(const std::string& rater_id) {
    if (std::find(def_.raters.begin(), def_.raters.end(), rater_id) == def_.raters.end()) {
        throw AuthError("unknown rater");
    }
    auto collect = [&](const StudyState& st) {
        std::vector<Assignment> out;
        for (const auto& id : st.sessions.at(rater_id)) out.push_back(st.assignments.at(id));
        return out;
    };
    if (auto st = snapshot(); st->sessions.contains(rater_id)) return collect(*st);

    std::lock_guard lock(write_mutex_);
    auto current = snapshot();
    if (current->sessions.contains(rater_id)) return collect(*current);
    json items = json::array();
    std::size_t pos = 0;
    for (const auto& [case_index, modality] : reading_order(def_.cases.size(), def_.blinding_seed, rater_id)) {
        items.push_back({{"assignment_id", random_id()},
                         {"case_id", def_.cases[case_index].case_id},
                         {"modality", to_string(modality)},
                         {"display_order", pos++}});
    }
    json rec{{"type", "session"}, {"rater_id", rater_id}, {"assignments", items}};
    auto next = std::make_shared<StudyState>(*current);
    apply_record(*next, rec, def_);
    append(rec);
    publish(next);
    return collect(*next);
}

std::optional<Assignment> StudyService::find_assignment(const std::string& assignment_id) const {
    auto st = snapshot();
    auto it = st->assignments.find(assignment_id);
    if (it == st->assignments.end()) return std::nullopt;
    return it->second;
}

const HUVolume& StudyService::volume_of(const Assignment& a) const {
    return def_.find_case(a.case_id).volumes.at(a.modality);
}

json StudyService::assignment_payload(const std::string& assignment_id) const {
    auto st = snapshot();
    auto it = st->assignments.find(assignment_id);
    if (it == st->assignments.end()) throw NotFoundError("unknown assignment");
    const auto& vol = volume_of(it->second);
    return {{"assignment_id", assignment_id},
            {"display_order", it->second.display_order},
            {"slice_count", vol.depth()},
            {"rows", vol.rows()},
            {"cols", vol.cols()},
            {"answered", st->ratings.contains(assignment_id)}};
}

std::string StudyService::slice_png(const std::string& assignment_id, std::size_t z) const {
    auto a = find_assignment(assignment_id);
    if (!a) throw NotFoundError("unknown assignment");
    const auto& vol = volume_of(*a);
    if (z >= vol.depth()) throw NotFoundError("slice index out of range");
    const auto unit = window_to_unit(vol.slice(z), def_.window);
    return encode_png_gray8(to_gray8(unit), unit.rows, unit.cols);
}

RatingAck StudyService::record_rating(const RatingSubmission& r) {
    std::lock_guard lock(write_mutex_);
    auto current = snapshot();
    if (!current->assignments.contains(r.assignment_id)) throw NotFoundError("unknown assignment");
    if (r.client_token.empty()) throw ValidationError("client_token is required");
    if (auto it = current->ratings.find(r.assignment_id); it != current->ratings.end()) {
        if (it->second.client_token != r.client_token) throw ConflictError("assignment already rated");
        return {it->second.assignment_id, it->second.client_token, it->second.submitted_at, it->second.sequence, true};
    }
    if (!r.answers.is_object()) throw ValidationError("answers must be an object");
    for (const auto& [qid, value] : r.answers.items()) {
        const auto* q = def_.questionnaire.find(qid);
        if (!q) throw ValidationError("unknown question '" + qid + "'");
        validate_answer(*q, value);
    }
    for (const auto& q : def_.questionnaire.questions) {
        if (!r.answers.contains(q.id)) throw ValidationError("question '" + q.id + "' is neither answered nor skipped");
    }
    json rec{{"type", "rating"},
             {"assignment_id", r.assignment_id},
             {"answers", r.answers},
             {"client_token", r.client_token},
             {"submitted_at", utc_now()},
             {"sequence", current->sequence + 1}};
    auto next = std::make_shared<StudyState>(*current);
    apply_record(*next, rec, def_);
    append(rec);
    publish(next);
    const auto& s = next->ratings.at(r.assignment_id);
    return {s.assignment_id, s.client_token, s.submitted_at, s.sequence, false};
}

AgreementReport StudyService::compute_agreement(const std::string& question_id) const {
    if (!def_.questionnaire.find(question_id)) throw ValidationError("unknown question '" + question_id + "'");
    auto st = snapshot();
    AgreementReport report{question_id, {}};
    for (auto m : kStudyModalities) {
        // rater -> case -> answer
        std::map<std::string, std::map<std::string, std::string>> answers;
        for (const auto& [id, rating] : st->ratings) {
            const auto& a = st->assignments.at(id);
            if (a.modality != m) continue;
            const auto& v = rating.answers.at(question_id);
            if (v.is_null()) continue;
            answers[a.rater_id][a.case_id] = v.dump();
        }
        ModalityAgreement out;
        out.modality = m;
        out.raters = answers.size();
        std::size_t matches = 0;
        std::vector<double> kappas;
        for (auto i = answers.begin(); i != answers.end(); ++i) {
            for (auto j = std::next(i); j != answers.end(); ++j) {
                std::vector<std::string> la, lb;
                for (const auto& [case_id, ans] : i->second) {
                    if (auto k = j->second.find(case_id); k != j->second.end()) {
                        la.push_back(ans);
                        lb.push_back(k->second);
                    }
                }
                if (la.empty()) continue;
                const auto pa = cohen_kappa(la, lb);
                out.pairs += la.size();
                for (std::size_t k = 0; k < la.size(); ++k) matches += la[k] == lb[k] ? 1 : 0;
                if (pa.kappa) kappas.push_back(*pa.kappa);
            }
        }
        out.sufficient = out.pairs > 0;
        if (out.sufficient) {
            out.percent_agreement = static_cast<double>(matches) / static_cast<double>(out.pairs);
            if (!kappas.empty()) out.kappa = std::accumulate(kappas.begin(), kappas.end(), 0.0) / kappas.size();
        }
        report.per_modality.push_back(out);
    }
    return report;
}

}  // namespace fdct::study
