#include "fdct/questionnaire.hpp"

#include <set>

#include "fdct/error.hpp"

namespace fdct::study {

using nlohmann::json;

std::string_view to_string(QuestionKind k) {
    switch (k) {
        case QuestionKind::YesNo: return "yes_no";
        case QuestionKind::Scale5: return "scale5";
        case QuestionKind::Aspect: return "aspect";
        case QuestionKind::Text: return "text";
    }
    return "yes_no";
}

QuestionKind question_kind_from_string(std::string_view s) {
    if (s == "yes_no") return QuestionKind::YesNo;
    if (s == "scale5") return QuestionKind::Scale5;
    if (s == "aspect") return QuestionKind::Aspect;
    if (s == "text") return QuestionKind::Text;
    throw ValidationError("unknown question kind '" + std::string(s) + "'");
}

void Questionnaire::validate() const {
    if (questions.empty()) throw ValidationError("questionnaire has no questions");
    std::set<std::string> seen;
    for (const auto& q : questions) {
        if (q.id.empty()) throw ValidationError("question with empty id");
        if (!seen.insert(q.id).second) throw ValidationError("duplicate question id '" + q.id + "'");
    }
}

const Question* Questionnaire::find(std::string_view id) const {
    for (const auto& q : questions) {
        if (q.id == id) return &q;
    }
    return nullptr;
}

Questionnaire default_questionnaire() {
    using K = QuestionKind;
    Questionnaire q;
    q.stand_in = true;
    q.questions = {
        {"overall_quality", "Overall image quality", K::Scale5},
        {"diagnostic_use", "Is the image sufficient for diagnosis?", K::YesNo},
        {"streak_artifacts", "Streak artifacts present?", K::YesNo},
        {"ring_artifacts", "Ring artifacts present?", K::YesNo},
        {"cupping", "Cupping or beam-hardening shading present?", K::YesNo},
        {"motion_artifacts", "Motion artifacts present?", K::YesNo},
        {"noise_level", "Image noise (1 = severe, 5 = none)", K::Scale5},
        {"slice_inhomogeneity", "Brightness jumps between neighbouring slices?", K::YesNo},
        {"artifact_severity", "Overall artifact burden (1 = severe, 5 = none)", K::Scale5},
        {"artifacts_limit_reading", "Do artifacts limit the reading?", K::YesNo},
        {"gray_white_differentiation", "Gray-white matter differentiation", K::Scale5},
        {"basal_ganglia", "Visibility of the basal ganglia", K::Scale5},
        {"internal_capsule", "Visibility of the internal capsule", K::Scale5},
        {"ventricles", "Visibility of the ventricular system", K::Scale5},
        {"posterior_fossa", "Visibility of the posterior fossa", K::Scale5},
        {"cortical_sulci", "Visibility of the cortical sulci", K::Scale5},
        {"subarachnoid_space", "Visibility of the basal cisterns", K::Scale5},
        {"hemorrhage_present", "Intracranial hemorrhage present?", K::YesNo},
        {"hemorrhage_confidence", "Confidence in the hemorrhage call", K::Scale5},
        {"intraparenchymal_hemorrhage", "Intraparenchymal hemorrhage?", K::YesNo},
        {"subarachnoid_hemorrhage", "Subarachnoid hemorrhage?", K::YesNo},
        {"subdural_hemorrhage", "Subdural hemorrhage?", K::YesNo},
        {"intraventricular_hemorrhage", "Intraventricular hemorrhage?", K::YesNo},
        {"hemorrhage_extent", "Can the extent of the hemorrhage be delineated?", K::YesNo},
        {"early_ischemia", "Early ischemic changes present?", K::YesNo},
        {"hyperdense_vessel", "Hyperdense vessel sign present?", K::YesNo},
        {"aspect_left", "ASPECT score, left hemisphere", K::Aspect},
        {"aspect_right", "ASPECT score, right hemisphere", K::Aspect},
        {"ischemia_confidence", "Confidence in the ischemia assessment", K::Scale5},
        {"midline_shift", "Midline shift or mass effect?", K::YesNo},
        {"remarks", "Further remarks", K::Text},
    };
    return q;
}

json to_json(const Questionnaire& q) {
    json items = json::array();
    for (const auto& x : q.questions) items.push_back({{"id", x.id}, {"text", x.text}, {"kind", to_string(x.kind)}});
    return {{"questions", items}, {"stand_in", q.stand_in}};
}

Questionnaire questionnaire_from_json(const json& j) {
    Questionnaire q;
    try {
        for (const auto& x : j.at("questions")) {
            q.questions.push_back({x.at("id").get<std::string>(), x.value("text", ""),
                                   question_kind_from_string(x.at("kind").get<std::string>())});
        }
        q.stand_in = j.value("stand_in", false);
    } catch (const json::exception& e) {
        throw ValidationError("malformed questionnaire: " + std::string(e.what()));
    }
    q.validate();
    return q;
}

void validate_answer(const Question& q, const json& answer) {
    if (answer.is_null()) return;
    auto fail = [&](const std::string& what) { throw ValidationError("answer to '" + q.id + "' " + what); };
    switch (q.kind) {
        case QuestionKind::YesNo:
            if (!answer.is_boolean()) fail("must be true or false");
            break;
        case QuestionKind::Scale5:
            if (!answer.is_number_integer() || answer.get<long long>() < 1 || answer.get<long long>() > 5) {
                fail("must be an integer from 1 to 5");
            }
            break;
        case QuestionKind::Aspect:
            if (!answer.is_number_integer() || answer.get<long long>() < 0 || answer.get<long long>() > 10) {
                fail("must be an integer from 0 to 10");
            }
            break;
        case QuestionKind::Text:
            if (!answer.is_string()) fail("must be a string");
            break;
    }
}

}  // namespace fdct::study
