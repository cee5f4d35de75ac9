#ifndef ORDINAL_ANNOTATION_HPP
#define ORDINAL_ANNOTATION_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ordinal/supervision.hpp"

namespace ordinal {

// Answer to "is joint i closer to the camera than joint j?".
enum class Answer { closer, farther, same, ambiguous };

std::string to_string(Answer a);
// Throws InvalidInput for anything but the four literals.
Answer answer_from_string(const std::string& s);

struct Question {
    int i = 0;
    int j = 0;

    friend bool operator==(const Question&, const Question&) = default;
};

// An equivalence class of joints judged to be at the same depth. Joints that
// were merged on an unresolved "ambiguous" answer are listed in soft_tied.
struct DepthClass {
    std::vector<int> members;
    std::vector<int> soft_tied;

    friend bool operator==(const DepthClass&, const DepthClass&) = default;
};

using Ordering = std::vector<DepthClass>;

struct LoggedAnswer {
    int i = 0;
    int j = 0;
    Answer answer = Answer::same;

    friend bool operator==(const LoggedAnswer&, const LoggedAnswer&) = default;
};

enum class SessionStatus { in_progress, complete };

// Binary insertion of joints into an ordered list of depth classes (front is
// closest). Joints are inserted in `insertion_order`; each comparison pits
// the pending joint against one member of the middle class of the current
// search window.
struct AnnotationSession {
    std::string item_id;
    int joint_count = 0;
    std::vector<int> insertion_order;
    Ordering classes;
    std::vector<LoggedAnswer> answer_log;
    int question_count = 0;
    SessionStatus status = SessionStatus::in_progress;

    // Insertion state.
    std::optional<int> pending_joint;
    int next_insert = 0;  // position in insertion_order of the next joint to insert
    int lo = 0;           // search window over class positions [lo, hi)
    int hi = 0;
    int probe_member = 0;  // index into classes[mid].members being compared
    bool retried = false;  // an ambiguous answer already moved the probe for this class

    friend bool operator==(const AnnotationSession&, const AnnotationSession&) = default;
};

// Fresh session. An empty insertion order means 0..N-1.
AnnotationSession make_session(std::string item_id, int joint_count,
                               std::vector<int> insertion_order = {});

std::optional<Question> next_question(const AnnotationSession& session);

// The answer refers to joint i of next_question's pair.
AnnotationSession submit_answer(AnnotationSession session, Answer answer);

Ordering final_ordering(const AnnotationSession& session);

// All C(N,2) relations implied by an ordering: 0 within a class, +/-1 across
// classes. Pairs involving a soft-tied joint inside its class are left out
// unless include_soft_ties is set.
RelationSet ordering_to_relations(const Ordering& classes, bool include_soft_ties = false);

// Upper bound on perfect-oracle questions for N joints: sum_{k=2..N} ceil(log2 k).
int binary_insertion_bound(int joint_count);

nlohmann::json session_to_json(const AnnotationSession& session);
AnnotationSession session_from_json(const nlohmann::json& j);
nlohmann::json ordering_to_json(const Ordering& ordering);

} // namespace ordinal

#endif // ORDINAL_ANNOTATION_HPP
