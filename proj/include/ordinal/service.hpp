#ifndef ORDINAL_SERVICE_HPP
#define ORDINAL_SERVICE_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ordinal/annotation.hpp"
#include "ordinal/io.hpp"

namespace httplib {
class Server;
}

namespace ordinal {

// A 2D pose shown to annotators.
struct Item {
    std::string id;
    Pose2D pose;
    std::string skeleton;
};

class ItemRegistry {
public:
    ItemRegistry() = default;
    explicit ItemRegistry(std::vector<Item> items);

    // {"items": [{"item_id": "...", "pose": {"joints": [[x, y], ...], "skeleton": "..."}}]}
    static ItemRegistry from_json(const json& j);
    static ItemRegistry load(const std::filesystem::path& path);
    json to_json() const;

    // Throws NotFound.
    const Item& find(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    const std::vector<Item>& items() const { return items_; }

    // Display payload: pose, skeleton edges and joint names.
    json display(const std::string& id) const;

private:
    std::vector<Item> items_;
    std::map<std::string, std::size_t> index_;
};

// One item per 3D pose, ids "item-00000", ..., holding the projected pose.
ItemRegistry registry_from_poses(const std::vector<Pose3D>& poses, const Camera& cam,
                                 const std::string& skeleton);
std::string item_id_for(std::size_t index);

// Annotation sessions persisted as one append-only JSON-lines event log per
// session under `directory`. Construction replays every log found there.
// Operations on one session are serialized; distinct sessions run
// concurrently.
class SessionStore {
public:
    SessionStore(std::filesystem::path directory, ItemRegistry registry);
    ~SessionStore();
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    const ItemRegistry& registry() const { return registry_; }

    // Throws NotFound for an unknown item.
    std::string create_session(const std::string& item_id);

    // Pending question with display data, or the completion marker with the
    // final ordering.
    json question(const std::string& session_id);

    // body: {"answer": "...", optional "seq", "i", "j" naming the question
    // being answered}. A mismatch with the pending question, or no pending
    // question, throws ProtocolError without changing state. The event is on
    // disk before this returns.
    json answer(const std::string& session_id, const json& body);

    // Throws ProtocolError while the session is in progress.
    json relations(const std::string& session_id);

    AnnotationSession snapshot(const std::string& session_id);
    std::vector<std::string> session_ids();

private:
    struct Entry;
    Entry& entry(const std::string& session_id);
    void replay(const std::filesystem::path& log);

    std::filesystem::path directory_;
    ItemRegistry registry_;
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    long next_id_ = 1;
};

// HTTP facade over a SessionStore:
//   POST /v1/sessions                    {"item_id"}
//   GET  /v1/sessions/{id}/question
//   POST /v1/sessions/{id}/answer        {"answer", optional "seq", "i", "j"}
//   GET  /v1/sessions/{id}/relations
//   GET  /v1/items/{id}
//   GET  /v1/health
// and, when ui_directory exists, static files under "/".
class AnnotationServer {
public:
    explicit AnnotationServer(SessionStore& store,
                              std::optional<std::filesystem::path> ui_directory = std::nullopt);
    ~AnnotationServer();

    // Port 0 picks a free port. Returns the bound port; throws Error when
    // the port cannot be bound.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    SessionStore& store_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace ordinal

#endif // ORDINAL_SERVICE_HPP
