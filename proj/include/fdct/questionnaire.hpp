#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fdct::study {

enum class QuestionKind { YesNo, Scale5, Aspect, Text };

std::string_view to_string(QuestionKind k);
QuestionKind question_kind_from_string(std::string_view s);

struct Question {
    std::string id;
    std::string text;
    QuestionKind kind = QuestionKind::YesNo;
};

struct Questionnaire {
    std::vector<Question> questions;
    /// True for the shipped default, which stands in for the unpublished form.
    bool stand_in = false;

    /// Non-empty, unique non-empty ids.
    void validate() const;
    const Question* find(std::string_view id) const;
};

/// 31 questions: overall quality, artifacts, anatomy visibility, bleeding,
/// ischemia with ASPECT per hemisphere, and a free-text remark.
Questionnaire default_questionnaire();

nlohmann::json to_json(const Questionnaire& q);
Questionnaire questionnaire_from_json(const nlohmann::json& j);

/// Throws ValidationError unless answer fits the kind. null means skipped and
/// is always accepted. yes/no takes a bool, the 5-point scale an integer 1..5,
/// ASPECT an integer 0..10 and free text a string.
void validate_answer(const Question& q, const nlohmann::json& answer);

}  // namespace fdct::study
