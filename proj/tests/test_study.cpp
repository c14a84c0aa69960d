#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <thread>

#include "fdct/error.hpp"
#include "fdct/study.hpp"
#include "fdct/volume_io.hpp"
#include "study_fixture.hpp"
#include "test_support.hpp"

using namespace fdct;
using namespace fdct::study;
using fdct::testing::skipped_answers;
using fdct::testing::small_study;
using fdct::testing::TempDir;
using nlohmann::json;

TEST(ReadingOrder, CoversEveryReadOnce) {
    for (std::size_t n : {1u, 2u, 5u, 10u}) {
        const auto order = reading_order(n, 3, "alice");
        ASSERT_EQ(order.size(), 3 * n);
        std::set<std::pair<std::size_t, Modality>> seen(order.begin(), order.end());
        EXPECT_EQ(seen.size(), 3 * n);
        for (std::size_t r = 0; r < 3; ++r) {
            std::set<std::size_t> round;
            for (std::size_t k = 0; k < n; ++k) round.insert(order[r * n + k].first);
            EXPECT_EQ(round.size(), n);  // every case once per round
        }
        if (n > 1) {
            for (std::size_t k = 1; k < order.size(); ++k) EXPECT_NE(order[k].first, order[k - 1].first);
        }
    }
}

TEST(ReadingOrder, DeterministicPerRaterAndSeed) {
    EXPECT_EQ(reading_order(10, 3, "alice"), reading_order(10, 3, "alice"));
    EXPECT_NE(reading_order(10, 3, "alice"), reading_order(10, 3, "bob"));
    EXPECT_NE(reading_order(10, 3, "alice"), reading_order(10, 4, "alice"));
}

TEST(Kappa, HandWorkedTable) {
    const auto k = cohen_kappa_table({{20, 5}, {10, 15}});
    EXPECT_EQ(k.n, 50u);
    EXPECT_EQ(k.observed, 0.7);
    ASSERT_TRUE(k.kappa);
    EXPECT_EQ(*k.kappa, 0.4);
}

TEST(Kappa, PerfectAndDegenerate) {
    const auto perfect = cohen_kappa({"a", "b", "a", "c"}, {"a", "b", "a", "c"});
    ASSERT_TRUE(perfect.kappa);
    EXPECT_EQ(*perfect.kappa, 1.0);
    EXPECT_EQ(perfect.observed, 1.0);
    const auto constant = cohen_kappa({"a", "a", "a"}, {"a", "a", "a"});
    EXPECT_FALSE(constant.kappa);
    EXPECT_EQ(constant.observed, 1.0);
    EXPECT_THROW(cohen_kappa({"a"}, {}), ValidationError);
    EXPECT_THROW(cohen_kappa_table({{1, 2}}), ValidationError);
}

TEST(Kappa, LabelSequencesMatchTable) {
    std::vector<std::string> a, b;
    auto add = [&](int n, const char* x, const char* y) {
        for (int i = 0; i < n; ++i) {
            a.push_back(x);
            b.push_back(y);
        }
    };
    add(20, "yes", "yes");
    add(5, "yes", "no");
    add(10, "no", "yes");
    add(15, "no", "no");
    const auto k = cohen_kappa(a, b);
    EXPECT_EQ(*k.kappa, 0.4);
    EXPECT_EQ(k.observed, 0.7);
}

TEST(Service, SessionsAreIdempotentAndBlind) {
    StudyService svc(small_study(10), "");
    const auto a = svc.create_session("r1");
    ASSERT_EQ(a.size(), 30u);
    EXPECT_EQ(svc.create_session("r1"), a);
    const auto b = svc.create_session("r2");
    std::vector<std::string> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].display_order, i);
        ca.push_back(a[i].case_id + std::string(to_string(a[i].modality)));
        cb.push_back(b[i].case_id + std::string(to_string(b[i].modality)));
    }
    EXPECT_NE(ca, cb);
    EXPECT_THROW(svc.create_session("mallory"), AuthError);
    std::set<std::string> ids;
    for (const auto& x : a) ids.insert(x.assignment_id);
    for (const auto& x : b) ids.insert(x.assignment_id);
    EXPECT_EQ(ids.size(), 60u);

    const auto payload = svc.assignment_payload(a[0].assignment_id);
    EXPECT_EQ(payload.at("slice_count"), 2);
    EXPECT_EQ(payload.at("rows"), 6);
    EXPECT_EQ(payload.at("cols"), 5);
    EXPECT_FALSE(payload.contains("modality"));
    EXPECT_FALSE(payload.contains("case_id"));
    EXPECT_THROW(svc.assignment_payload("00"), NotFoundError);
}

TEST(Service, SlicePng) {
    StudyService svc(small_study(2), "");
    const auto a = svc.create_session("r1");
    const auto png = svc.slice_png(a[0].assignment_id, 1);
    ASSERT_GT(png.size(), 8u);
    EXPECT_EQ(png.substr(1, 3), "PNG");
    EXPECT_THROW(svc.slice_png(a[0].assignment_id, 2), NotFoundError);
    EXPECT_THROW(svc.slice_png("ff", 0), NotFoundError);
}

TEST(Service, RatingsAreIdempotentPerToken) {
    StudyService svc(small_study(2), "");
    const auto a = svc.create_session("r1");
    const auto& q = svc.definition().questionnaire;
    RatingSubmission sub{a[0].assignment_id, skipped_answers(q, {{"overall_quality", 4}}), "tok-1"};
    const auto first = svc.record_rating(sub);
    EXPECT_FALSE(first.replayed);
    EXPECT_EQ(first.sequence, 1u);
    const auto again = svc.record_rating(sub);
    EXPECT_TRUE(again.replayed);
    EXPECT_EQ(again.sequence, first.sequence);
    EXPECT_EQ(again.submitted_at, first.submitted_at);
    sub.client_token = "tok-2";
    EXPECT_THROW(svc.record_rating(sub), ConflictError);
    EXPECT_EQ(svc.snapshot()->ratings.size(), 1u);
    EXPECT_TRUE(svc.assignment_payload(a[0].assignment_id).at("answered").get<bool>());
}

TEST(Service, RatingValidation) {
    StudyService svc(small_study(2), "");
    const auto a = svc.create_session("r1");
    const auto& q = svc.definition().questionnaire;
    EXPECT_THROW(svc.record_rating({"abc", skipped_answers(q), "t"}), NotFoundError);
    EXPECT_THROW(svc.record_rating({a[0].assignment_id, skipped_answers(q), ""}), ValidationError);
    EXPECT_THROW(svc.record_rating({a[0].assignment_id, skipped_answers(q, {{"bogus", 1}}), "t"}), ValidationError);
    EXPECT_THROW(svc.record_rating({a[0].assignment_id, skipped_answers(q, {{"aspect_left", 12}}), "t"}),
                 ValidationError);
    auto partial = skipped_answers(q);
    partial.erase("remarks");
    EXPECT_THROW(svc.record_rating({a[0].assignment_id, partial, "t"}), ValidationError);
    EXPECT_TRUE(svc.snapshot()->ratings.empty());
}

TEST(Service, ReplayRebuildsIdenticalState) {
    TempDir tmp;
    const auto log = tmp / "ratings.jsonl";
    StudyState before;
    {
        StudyService svc(small_study(4), log);
        const auto a = svc.create_session("r1");
        svc.create_session("r2");
        const auto& q = svc.definition().questionnaire;
        for (std::size_t i = 0; i < 5; ++i) {
            svc.record_rating({a[i].assignment_id, skipped_answers(q, {{"diagnostic_use", i % 2 == 0}}), "t" + std::to_string(i)});
        }
        before = *svc.snapshot();
    }
    StudyService reopened(small_study(4), log);
    EXPECT_EQ(*reopened.snapshot(), before);
    EXPECT_EQ(reopened.snapshot()->sequence, 5u);

    // A torn final line from a crash mid-append is ignored.
    std::ofstream(log, std::ios::app) << R"({"type": "rating", "assignment_)";
    StudyService torn(small_study(4), log);
    EXPECT_EQ(*torn.snapshot(), before);
}

TEST(Service, ConcurrentSubmissionsSerialize) {
    StudyService svc(small_study(10), "");
    const auto a = svc.create_session("r1");
    const auto& q = svc.definition().questionnaire;
    std::vector<std::thread> pool;
    for (int w = 0; w < 4; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = static_cast<std::size_t>(w); i < a.size(); i += 4) {
                svc.record_rating({a[i].assignment_id, skipped_answers(q), "tok"});
                svc.snapshot();
            }
        });
    }
    for (auto& t : pool) t.join();
    const auto st = svc.snapshot();
    EXPECT_EQ(st->ratings.size(), 30u);
    std::set<std::uint64_t> seqs;
    for (const auto& [id, r] : st->ratings) seqs.insert(r.sequence);
    EXPECT_EQ(seqs.size(), 30u);
    EXPECT_EQ(*seqs.rbegin(), 30u);
}

TEST(Service, AgreementMatchesHandTable) {
    // 50 cases; FDCT reads answered per the 20/5/10/15 table.
    StudyService svc(small_study(50), "");
    const auto& q = svc.definition().questionnaire;
    auto answer_for = [](const std::string& rater, std::size_t c) {
        const bool r1 = c < 25;
        const bool r2 = c < 20 || (c >= 25 && c < 35);
        return rater == "r1" ? r1 : r2;
    };
    for (const std::string rater : {"r1", "r2"}) {
        for (const auto& a : svc.create_session(rater)) {
            if (a.modality != Modality::FDCT) continue;
            const auto c = static_cast<std::size_t>(std::stoul(a.case_id.substr(1)));
            svc.record_rating({a.assignment_id, skipped_answers(q, {{"diagnostic_use", answer_for(rater, c)}}), "t"});
        }
    }
    const auto report = svc.compute_agreement("diagnostic_use");
    ASSERT_EQ(report.per_modality.size(), 3u);
    const auto& fdct = report.per_modality[0];
    EXPECT_EQ(fdct.modality, Modality::FDCT);
    EXPECT_TRUE(fdct.sufficient);
    EXPECT_EQ(fdct.pairs, 50u);
    EXPECT_EQ(fdct.percent_agreement, 0.7);
    ASSERT_TRUE(fdct.kappa);
    EXPECT_EQ(*fdct.kappa, 0.4);

    const auto j = to_json(report);
    EXPECT_FALSE(j["per_modality"][1]["sufficient"].get<bool>());
    EXPECT_TRUE(j["per_modality"][1]["cohen_kappa"].is_null());
    EXPECT_TRUE(j["per_modality"][1].contains("reason"));
    EXPECT_THROW(svc.compute_agreement("bogus"), ValidationError);
}

TEST(Service, DegenerateMarginalsGiveNullKappa) {
    StudyService svc(small_study(3), "");
    const auto& q = svc.definition().questionnaire;
    for (const std::string rater : {"r1", "r2"}) {
        for (const auto& a : svc.create_session(rater)) {
            svc.record_rating({a.assignment_id, skipped_answers(q, {{"overall_quality", 3}}), "t"});
        }
    }
    const auto j = to_json(svc.compute_agreement("overall_quality"));
    for (const auto& m : j["per_modality"]) {
        EXPECT_TRUE(m["sufficient"].get<bool>());
        EXPECT_EQ(m["percent_agreement"], 1.0);
        EXPECT_TRUE(m["cohen_kappa"].is_null());
    }
}

TEST(StudyConfig, LoadsVolumesFromDataRoot) {
    TempDir tmp;
    const auto def = small_study(2);
    json cases = json::array();
    for (const auto& c : def.cases) {
        json vols;
        for (const auto& [m, v] : c.volumes) {
            const auto rel = c.case_id + "/" + std::string(to_string(m));
            save_volume(v, tmp / rel);
            vols[std::string(to_string(m))] = rel;
        }
        cases.push_back({{"case_id", c.case_id}, {"volumes", vols}});
    }
    std::ofstream(tmp / "study.json") << json{{"blinding_seed", 5}, {"raters", {"a", "b"}}, {"cases", cases},
                                              {"admin_token", "secret"}}.dump();
    const auto cfg = load_study_config(tmp / "study.json", tmp.path());
    EXPECT_EQ(cfg.admin_token, "secret");
    EXPECT_EQ(cfg.definition.cases.size(), 2u);
    EXPECT_EQ(cfg.definition.blinding_seed, 5u);
    EXPECT_EQ(cfg.definition.questionnaire.questions.size(), 31u);
    EXPECT_EQ(cfg.log_path, tmp / "ratings.jsonl");
    EXPECT_NO_THROW(cfg.definition.validate());

    std::ofstream(tmp / "bad.json") << R"({"raters": ["a"]})";
    EXPECT_THROW(load_study_config(tmp / "bad.json", tmp.path()), ConfigurationError);
    EXPECT_THROW(load_study_config(tmp / "missing.json", tmp.path()), IoError);
}

TEST(StudyDefinition, Validation) {
    auto def = small_study(2);
    def.cases[1].volumes.erase(Modality::MDCT);
    EXPECT_THROW(def.validate(), ValidationError);
    def = small_study(2);
    def.raters = {"x", "x"};
    EXPECT_THROW(def.validate(), ValidationError);
    EXPECT_THROW(small_study(2).find_case("zz"), NotFoundError);
}
