#include "ordinal/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "ordinal/synth.hpp"

namespace ordinal {

namespace fs = std::filesystem;

namespace {

void append_durable(const fs::path& path, const std::string& line, bool create) {
    const int flags = O_WRONLY | O_APPEND | (create ? O_CREAT | O_EXCL : 0);
    const int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0)
        throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
    const std::string data = line + "\n";
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            const int err = errno;
            ::close(fd);
            throw DataError("write failed for " + path.string() + ": " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced)
        throw DataError("fsync failed for " + path.string());
}

void sync_directory(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

// Drops an unacknowledged partial last line so later appends start clean.
void truncate_durable(const fs::path& path, std::size_t size) {
    const int fd = ::open(path.c_str(), O_WRONLY);
    if (fd < 0)
        throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
    const bool ok = ::ftruncate(fd, static_cast<off_t>(size)) == 0 && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok)
        throw DataError("cannot truncate " + path.string());
}

json question_json(const Question& q) { return {{"i", q.i}, {"j", q.j}}; }

std::string session_id_for(long n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s-%06ld", n);
    return buf;
}

} // namespace

std::string item_id_for(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "item-%05zu", index);
    return buf;
}

ItemRegistry::ItemRegistry(std::vector<Item> items) : items_(std::move(items)) {
    for (std::size_t k = 0; k < items_.size(); ++k) {
        const auto& it = items_[k];
        if (!index_.emplace(it.id, k).second)
            throw DataError("item registry: duplicate item id '" + it.id + "'");
        const Skeleton* skel = nullptr;
        try {
            skel = &find_skeleton(it.skeleton);
        } catch (const NotFound& e) {
            throw DataError("item registry: " + std::string(e.what()));
        }
        if (skel->joint_count() != it.pose.rows())
            throw DataError("item registry: item '" + it.id + "' does not match its skeleton");
    }
}

ItemRegistry ItemRegistry::from_json(const json& j) {
    if (!j.is_object() || !j.contains("items") || !j["items"].is_array())
        throw DataError("item registry: missing \"items\" array");
    std::vector<Item> items;
    for (const auto& e : j["items"]) {
        if (!e.is_object() || !e.contains("item_id") || !e["item_id"].is_string() ||
            !e.contains("pose"))
            throw DataError("item registry: each item needs item_id and pose");
        auto lp = pose2_from_json(e["pose"]);
        items.push_back({e["item_id"].get<std::string>(), std::move(lp.pose), lp.skeleton});
    }
    return ItemRegistry(std::move(items));
}

ItemRegistry ItemRegistry::load(const fs::path& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

json ItemRegistry::to_json() const {
    json items = json::array();
    for (const auto& it : items_)
        items.push_back({{"item_id", it.id}, {"pose", pose_to_json(it.pose, it.skeleton)}});
    return {{"items", items}};
}

const Item& ItemRegistry::find(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end())
        throw NotFound("unknown item '" + id + "'");
    return items_[it->second];
}

json ItemRegistry::display(const std::string& id) const {
    const Item& item = find(id);
    const Skeleton& skel = find_skeleton(item.skeleton);
    json edges = json::array();
    for (const auto& [p, c] : skel.edges())
        edges.push_back({p, c});
    return {{"item_id", item.id},
            {"pose", pose_to_json(item.pose, item.skeleton)},
            {"edges", edges},
            {"joint_names", skel.joint_names}};
}

ItemRegistry registry_from_poses(const std::vector<Pose3D>& poses, const Camera& cam,
                                 const std::string& skeleton) {
    std::vector<Item> items;
    items.reserve(poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k)
        items.push_back({item_id_for(k), project(poses[k], cam), skeleton});
    return ItemRegistry(std::move(items));
}

struct SessionStore::Entry {
    std::mutex mutex;
    AnnotationSession session;
    fs::path log;
};

SessionStore::SessionStore(fs::path directory, ItemRegistry registry)
    : directory_(std::move(directory)), registry_(std::move(registry)) {
    fs::create_directories(directory_);
    std::vector<fs::path> logs;
    for (const auto& e : fs::directory_iterator(directory_))
        if (e.is_regular_file() && e.path().extension() == ".jsonl")
            logs.push_back(e.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& log : logs)
        replay(log);
}

SessionStore::~SessionStore() = default;

void SessionStore::replay(const fs::path& log) {
    const std::string raw = read_file(log);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < raw.size()) {
        const auto nl = raw.find('\n', start);
        if (nl == std::string::npos)
            break;  // torn final write, never acknowledged
        lines.push_back(raw.substr(start, nl - start));
        start = nl + 1;
    }
    if (lines.empty()) {
        fs::remove(log);
        sync_directory(directory_);
        return;
    }
    if (start < raw.size())
        truncate_durable(log, start);
    auto fail = [&](std::size_t k, const std::string& why) {
        throw DataError(log.string() + ":" + std::to_string(k + 1) + ": " + why);
    };
    auto e = std::make_unique<Entry>();
    e->log = log;
    std::string id;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        json ev;
        try {
            ev = json::parse(lines[k]);
        } catch (const json::exception& ex) {
            fail(k, ex.what());
        }
        try {
            const std::string kind = ev.at("event").get<std::string>();
            if (k == 0) {
                if (kind != "create")
                    fail(k, "log must start with a create event");
                id = ev.at("session_id").get<std::string>();
                e->session = make_session(ev.at("item_id").get<std::string>(),
                                          ev.at("joint_count").get<int>(),
                                          ev.at("insertion_order").get<std::vector<int>>());
                continue;
            }
            if (kind != "answer")
                fail(k, "unexpected event '" + kind + "'");
            const auto q = next_question(e->session);
            if (!q || q->i != ev.at("i").get<int>() || q->j != ev.at("j").get<int>() ||
                e->session.question_count != ev.at("seq").get<int>())
                fail(k, "answer does not match the replayed question");
            e->session =
                submit_answer(std::move(e->session), answer_from_string(ev.at("answer").get<std::string>()));
        } catch (const json::exception& ex) {
            fail(k, ex.what());
        } catch (const InvalidInput& ex) {
            fail(k, ex.what());
        }
    }
    if (id.size() > 2 && id.rfind("s-", 0) == 0) {
        try {
            next_id_ = std::max(next_id_, std::stol(id.substr(2)) + 1);
        } catch (const std::exception&) {
        }
    }
    sessions_.emplace(id, std::move(e));
}

SessionStore::Entry& SessionStore::entry(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end())
        throw NotFound("unknown session '" + session_id + "'");
    return *it->second;
}

std::string SessionStore::create_session(const std::string& item_id) {
    const Item& item = registry_.find(item_id);
    std::lock_guard lock(mutex_);
    const std::string id = session_id_for(next_id_);
    auto e = std::make_unique<Entry>();
    e->session = make_session(item_id, static_cast<int>(item.pose.rows()));
    e->log = directory_ / (id + ".jsonl");
    const json ev = {{"event", "create"},
                     {"session_id", id},
                     {"item_id", item_id},
                     {"joint_count", e->session.joint_count},
                     {"insertion_order", e->session.insertion_order}};
    append_durable(e->log, ev.dump(), true);
    sync_directory(directory_);
    ++next_id_;
    sessions_.emplace(id, std::move(e));
    return id;
}

json SessionStore::question(const std::string& session_id) {
    Entry& e = entry(session_id);
    std::lock_guard lock(e.mutex);
    const auto& s = e.session;
    json out = {{"session_id", session_id},
                {"item_id", s.item_id},
                {"question_count", s.question_count}};
    if (const auto q = next_question(s)) {
        out["status"] = "in-progress";
        out["seq"] = s.question_count;
        out["question"] = question_json(*q);
        json display = registry_.display(s.item_id);
        display["highlight"] = {q->i, q->j};
        out["display"] = std::move(display);
    } else {
        out["status"] = "complete";
        out["question"] = nullptr;
        out["ordering"] = ordering_to_json(final_ordering(s));
    }
    return out;
}

json SessionStore::answer(const std::string& session_id, const json& body) {
    Entry& e = entry(session_id);
    if (!body.is_object() || !body.contains("answer") || !body["answer"].is_string())
        throw InvalidInput("answer body needs a string field \"answer\"");
    const Answer a = answer_from_string(body["answer"].get<std::string>());
    std::lock_guard lock(e.mutex);
    const auto q = next_question(e.session);
    if (!q)
        throw ProtocolError("session '" + session_id + "' has no pending question");
    auto field = [&](const char* key) -> std::optional<int> {
        if (!body.contains(key))
            return std::nullopt;
        if (!body[key].is_number_integer())
            throw InvalidInput(std::string("answer field \"") + key + "\" must be an integer");
        return body[key].get<int>();
    };
    const auto seq = field("seq");
    const auto i = field("i");
    const auto j = field("j");
    if ((seq && *seq != e.session.question_count) || (i && *i != q->i) || (j && *j != q->j))
        throw ProtocolError("answer does not refer to the pending question");

    AnnotationSession next = submit_answer(e.session, a);
    const json ev = {{"event", "answer"},
                     {"seq", e.session.question_count},
                     {"i", q->i},
                     {"j", q->j},
                     {"answer", to_string(a)}};
    append_durable(e.log, ev.dump(), false);
    e.session = std::move(next);
    return {{"session_id", session_id},
            {"status", e.session.status == SessionStatus::complete ? "complete" : "in-progress"},
            {"question_count", e.session.question_count}};
}

json SessionStore::relations(const std::string& session_id) {
    Entry& e = entry(session_id);
    std::lock_guard lock(e.mutex);
    if (e.session.status != SessionStatus::complete)
        throw ProtocolError("session '" + session_id + "' is not complete");
    return relations_to_json(ordering_to_relations(final_ordering(e.session)));
}

AnnotationSession SessionStore::snapshot(const std::string& session_id) {
    Entry& e = entry(session_id);
    std::lock_guard lock(e.mutex);
    return e.session;
}

std::vector<std::string> SessionStore::session_ids() {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : sessions_)
        ids.push_back(id);
    return ids;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const NotFound& e) {
        send_json(res, 404, {{"error", e.what()}});
    } catch (const ProtocolError& e) {
        send_json(res, 409, {{"error", e.what()}});
    } catch (const InvalidInput& e) {
        send_json(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty())
        return json::object();
    return json::parse(req.body);
}

} // namespace

AnnotationServer::AnnotationServer(SessionStore& store, std::optional<fs::path> ui_directory)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    srv.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            send_json(res, 200, {{"status", "ok"}, {"sessions", store_.session_ids().size()}});
        });
    });
    srv.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = parse_body(req);
            if (!body.is_object() || !body.contains("item_id") || !body["item_id"].is_string())
                throw InvalidInput("body needs a string field \"item_id\"");
            const std::string id = store_.create_session(body["item_id"].get<std::string>());
            const json q = store_.question(id);
            send_json(res, 201,
                      {{"session_id", id},
                       {"item_id", q["item_id"]},
                       {"status", q["status"]},
                       {"question_count", q["question_count"]}});
        });
    });
    srv.Get(R"(/v1/sessions/([^/]+)/question)",
            [this](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] { send_json(res, 200, store_.question(req.matches[1])); });
            });
    srv.Post(R"(/v1/sessions/([^/]+)/answer)",
             [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                     send_json(res, 200, store_.answer(req.matches[1], parse_body(req)));
                 });
             });
    srv.Get(R"(/v1/sessions/([^/]+)/relations)",
            [this](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] { send_json(res, 200, store_.relations(req.matches[1])); });
            });
    srv.Get(R"(/v1/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store_.registry().display(req.matches[1])); });
    });
    if (ui_directory && fs::is_directory(*ui_directory))
        srv.set_mount_point("/", ui_directory->string());
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p <= 0)
            throw Error("cannot bind " + host);
        return p;
    }
    if (!server_->bind_to_port(host, port))
        throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    return port;
}

void AnnotationServer::listen() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (server_)
        server_->stop();
}

void AnnotationServer::wait_until_ready() const { server_->wait_until_ready(); }

} // namespace ordinal
