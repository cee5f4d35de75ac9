#include "ordinal/annotation.hpp"

#include <algorithm>
#include <numeric>

namespace ordinal {

using nlohmann::json;

std::string to_string(Answer a) {
    switch (a) {
    case Answer::closer:
        return "closer";
    case Answer::farther:
        return "farther";
    case Answer::same:
        return "same";
    case Answer::ambiguous:
        return "ambiguous";
    }
    return "?";
}

Answer answer_from_string(const std::string& s) {
    if (s == "closer")
        return Answer::closer;
    if (s == "farther")
        return Answer::farther;
    if (s == "same")
        return Answer::same;
    if (s == "ambiguous")
        return Answer::ambiguous;
    throw InvalidInput("answer must be closer, farther, same or ambiguous; got '" + s + "'");
}

namespace {

void begin_insertion(AnnotationSession& s) {
    if (s.next_insert >= s.joint_count) {
        s.pending_joint.reset();
        s.status = SessionStatus::complete;
        s.lo = s.hi = 0;
        return;
    }
    s.pending_joint = s.insertion_order[static_cast<std::size_t>(s.next_insert)];
    s.lo = 0;
    s.hi = static_cast<int>(s.classes.size());
    s.probe_member = 0;
    s.retried = false;
}

void place_pending(AnnotationSession& s, int class_index, bool soft) {
    auto& cls = s.classes[static_cast<std::size_t>(class_index)];
    cls.members.push_back(*s.pending_joint);
    if (soft)
        cls.soft_tied.push_back(*s.pending_joint);
    ++s.next_insert;
    begin_insertion(s);
}

void narrow(AnnotationSession& s, bool pending_is_closer) {
    const int mid = (s.lo + s.hi) / 2;
    if (pending_is_closer)
        s.hi = mid;
    else
        s.lo = mid + 1;
    s.probe_member = 0;
    s.retried = false;
    if (s.lo == s.hi) {
        s.classes.insert(s.classes.begin() + s.lo, DepthClass{{*s.pending_joint}, {}});
        ++s.next_insert;
        begin_insertion(s);
    }
}

SessionStatus status_from_string(const std::string& s) {
    if (s == "in-progress")
        return SessionStatus::in_progress;
    if (s == "complete")
        return SessionStatus::complete;
    throw DataError("unknown session status '" + s + "'");
}

} // namespace

AnnotationSession make_session(std::string item_id, int joint_count,
                               std::vector<int> insertion_order) {
    if (joint_count < 1)
        throw InvalidInput("annotation session needs at least one joint");
    if (insertion_order.empty()) {
        insertion_order.resize(static_cast<std::size_t>(joint_count));
        std::iota(insertion_order.begin(), insertion_order.end(), 0);
    }
    std::vector<int> check = insertion_order;
    std::sort(check.begin(), check.end());
    for (int k = 0; k < joint_count; ++k)
        if (static_cast<int>(check.size()) != joint_count || check[static_cast<std::size_t>(k)] != k)
            throw InvalidInput("insertion order must be a permutation of 0..N-1");

    AnnotationSession s;
    s.item_id = std::move(item_id);
    s.joint_count = joint_count;
    s.insertion_order = std::move(insertion_order);
    s.classes.push_back(DepthClass{{s.insertion_order.front()}, {}});
    s.next_insert = 1;
    begin_insertion(s);
    return s;
}

std::optional<Question> next_question(const AnnotationSession& s) {
    if (s.status == SessionStatus::complete || !s.pending_joint)
        return std::nullopt;
    const int mid = (s.lo + s.hi) / 2;
    const int rep =
        s.classes[static_cast<std::size_t>(mid)].members[static_cast<std::size_t>(s.probe_member)];
    const int p = *s.pending_joint;
    return Question{std::min(p, rep), std::max(p, rep)};
}

AnnotationSession submit_answer(AnnotationSession s, Answer answer) {
    const auto q = next_question(s);
    if (!q)
        throw ProtocolError("submit_answer: no pending question");
    s.answer_log.push_back({q->i, q->j, answer});
    ++s.question_count;

    // Re-express the answer from the pending joint's point of view.
    const bool pending_is_i = q->i == *s.pending_joint;
    Answer rel = answer;
    if (!pending_is_i && answer == Answer::closer)
        rel = Answer::farther;
    else if (!pending_is_i && answer == Answer::farther)
        rel = Answer::closer;

    const int mid = (s.lo + s.hi) / 2;
    switch (rel) {
    case Answer::closer:
        narrow(s, true);
        break;
    case Answer::farther:
        narrow(s, false);
        break;
    case Answer::same:
        place_pending(s, mid, false);
        break;
    case Answer::ambiguous: {
        const auto& members = s.classes[static_cast<std::size_t>(mid)].members;
        if (!s.retried && members.size() > 1) {
            s.probe_member = (s.probe_member + 1) % static_cast<int>(members.size());
            s.retried = true;
        } else {
            place_pending(s, mid, true);
        }
        break;
    }
    }
    return s;
}

Ordering final_ordering(const AnnotationSession& s) {
    if (s.status != SessionStatus::complete)
        throw ContractViolation("final_ordering: session is not complete");
    Ordering out = s.classes;
    for (auto& c : out) {
        std::sort(c.members.begin(), c.members.end());
        std::sort(c.soft_tied.begin(), c.soft_tied.end());
    }
    return out;
}

RelationSet ordering_to_relations(const Ordering& classes, bool include_soft_ties) {
    int n = 0;
    for (const auto& c : classes)
        for (int m : c.members)
            n = std::max(n, m + 1);
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    std::vector<bool> soft(static_cast<std::size_t>(n), false);
    for (std::size_t k = 0; k < classes.size(); ++k) {
        for (int m : classes[k].members) {
            if (cls[static_cast<std::size_t>(m)] != -1)
                throw InvalidInput("ordering_to_relations: joint listed twice");
            cls[static_cast<std::size_t>(m)] = static_cast<int>(k);
        }
        for (int m : classes[k].soft_tied)
            soft[static_cast<std::size_t>(m)] = true;
    }
    RelationSet out;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const int ci = cls[static_cast<std::size_t>(i)];
            const int cj = cls[static_cast<std::size_t>(j)];
            if (ci < 0 || cj < 0)
                continue;
            if (ci == cj) {
                if (!include_soft_ties &&
                    (soft[static_cast<std::size_t>(i)] || soft[static_cast<std::size_t>(j)]))
                    continue;
                out.relations.push_back({i, j, 0});
            } else {
                out.relations.push_back({i, j, ci < cj ? 1 : -1});
            }
        }
    return out;
}

int binary_insertion_bound(int joint_count) {
    int total = 0;
    for (int k = 2; k <= joint_count; ++k) {
        int c = 0;
        while ((1 << c) < k)
            ++c;
        total += c;
    }
    return total;
}

json ordering_to_json(const Ordering& ordering) {
    json out = json::array();
    for (const auto& c : ordering)
        out.push_back({{"members", c.members}, {"soft_tied", c.soft_tied}});
    return out;
}

json session_to_json(const AnnotationSession& s) {
    json log = json::array();
    for (const auto& a : s.answer_log)
        log.push_back({{"i", a.i}, {"j", a.j}, {"answer", to_string(a.answer)}});
    json j = {{"item_id", s.item_id},
              {"joint_count", s.joint_count},
              {"insertion_order", s.insertion_order},
              {"classes", ordering_to_json(s.classes)},
              {"answer_log", log},
              {"question_count", s.question_count},
              {"status", s.status == SessionStatus::complete ? "complete" : "in-progress"},
              {"next_insert", s.next_insert},
              {"lo", s.lo},
              {"hi", s.hi},
              {"probe_member", s.probe_member},
              {"retried", s.retried}};
    j["pending_joint"] = s.pending_joint ? json(*s.pending_joint) : json(nullptr);
    return j;
}

AnnotationSession session_from_json(const json& j) {
    AnnotationSession s;
    try {
        s.item_id = j.at("item_id").get<std::string>();
        s.joint_count = j.at("joint_count").get<int>();
        s.insertion_order = j.at("insertion_order").get<std::vector<int>>();
        for (const auto& c : j.at("classes"))
            s.classes.push_back({c.at("members").get<std::vector<int>>(),
                                 c.at("soft_tied").get<std::vector<int>>()});
        for (const auto& a : j.at("answer_log"))
            s.answer_log.push_back({a.at("i").get<int>(), a.at("j").get<int>(),
                                    answer_from_string(a.at("answer").get<std::string>())});
        s.question_count = j.at("question_count").get<int>();
        s.status = status_from_string(j.at("status").get<std::string>());
        s.next_insert = j.at("next_insert").get<int>();
        s.lo = j.at("lo").get<int>();
        s.hi = j.at("hi").get<int>();
        s.probe_member = j.at("probe_member").get<int>();
        s.retried = j.at("retried").get<bool>();
        if (!j.at("pending_joint").is_null())
            s.pending_joint = j.at("pending_joint").get<int>();
    } catch (const json::exception& e) {
        throw DataError(std::string("session JSON: ") + e.what());
    } catch (const InvalidInput& e) {
        throw DataError(std::string("session JSON: ") + e.what());
    }
    if (s.question_count != static_cast<int>(s.answer_log.size()))
        throw DataError("session JSON: question_count disagrees with answer_log");
    return s;
}

} // namespace ordinal
