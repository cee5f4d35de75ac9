// ordinal: data generation, training, evaluation, gradient checks,
// annotation simulation and the annotation service.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>

#include "ordinal/annotation.hpp"
#include "ordinal/gradcheck.hpp"
#include "ordinal/io.hpp"
#include "ordinal/random.hpp"
#include "ordinal/service.hpp"
#include "ordinal/synth.hpp"
#include "ordinal/trainer.hpp"

#include <httplib.h>

namespace fs = std::filesystem;
using namespace ordinal;

namespace {

struct UsageError : Error {
    using Error::Error;
};

struct CheckFailed : Error {
    using Error::Error;
};

void print_json(const json& j) { std::cout << j.dump() << std::endl; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

// Self-validation: re-read an output through its loader.
void validate_output(const std::string& kind, const fs::path& path) {
    try {
        if (kind == "poses") {
            std::string skeleton;
            const auto poses = read_poses_jsonl(path, &skeleton);
            const auto& skel = find_skeleton(skeleton);
            for (const auto& p : poses)
                if (p.rows() != skel.joint_count() || !p.allFinite())
                    throw DataError("pose does not match skeleton");
        } else if (kind == "registry") {
            ItemRegistry::load(path);
        } else if (kind == "checkpoint") {
            network_from_checkpoint(load_checkpoint(path));
        } else if (kind == "report") {
            report_from_json(read_json(path));
        } else if (kind == "config") {
            config_from_json(read_json(path)).validate();
        } else if (kind == "relations") {
            relations_from_json(read_json(path));
        } else if (kind == "annotations") {
            const json doc = read_json(path);
            for (const auto& s : doc.at("sessions")) {
                const RelationSet rel = relations_from_json(s.at("relations"));
                const int n = s.at("joint_count").get<int>();
                rel.validate(n);
                if (find_contradiction(rel, n))
                    throw DataError("exported relations are contradictory");
            }
        } else {
            throw ContractViolation("unknown output kind " + kind);
        }
    } catch (const json::exception& e) {
        throw CheckFailed("validation of " + path.string() + " failed: " + e.what());
    } catch (const Error& e) {
        throw CheckFailed("validation of " + path.string() + " failed: " + e.what());
    }
}

json summary_of(const EvalReport& r) {
    json j = report_to_json(r);
    j.erase("loss_log");
    j.erase("reconstruction_loss_log");
    j.erase("config");
    return j;
}

// gen-data ------------------------------------------------------------------

struct GenDataArgs {
    fs::path out_dir;
    int count = 1000;
    std::uint64_t seed = 0;
    double sigma_deg = 2.0;
    bool validate = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (a.count < 1)
        throw UsageError("--count must be at least 1");
    if (!(a.sigma_deg >= 0.0))
        throw UsageError("--sigma-deg must be non-negative");
    PoseDistribution dist = default_distribution();
    dist.perturbation_sigma_deg = a.sigma_deg;
    const auto poses = sample_poses(dist, a.count, a.seed);
    ensure_dir(a.out_dir);
    const fs::path poses_path = a.out_dir / "poses.jsonl";
    const fs::path items_path = a.out_dir / "items.json";
    write_poses_jsonl(poses_path, poses, kDefaultSkeletonId);
    write_json(items_path, registry_from_poses(poses, default_camera(), kDefaultSkeletonId).to_json());
    const Camera cam = default_camera();
    const json manifest = {{"seed", a.seed},
                           {"count", a.count},
                           {"skeleton", kDefaultSkeletonId},
                           {"perturbation_sigma_deg", a.sigma_deg},
                           {"camera", {{"scale", cam.scale}, {"offset", {cam.principal_offset.x(), cam.principal_offset.y()}}}},
                           {"poses", "poses.jsonl"},
                           {"items", "items.json"}};
    write_json(a.out_dir / "manifest.json", manifest);
    if (a.validate) {
        validate_output("poses", poses_path);
        validate_output("registry", items_path);
    }
    print_json({{"command", "gen-data"}, {"seed", a.seed}, {"count", a.count},
                {"poses", poses_path.string()}, {"items", items_path.string()}});
    return 0;
}

// train / eval --------------------------------------------------------------

struct ExperimentArgs {
    fs::path config;
    std::optional<std::string> task;
    std::optional<std::uint64_t> seed;
    std::optional<long> iterations;
    std::optional<int> pose_count;
    fs::path out_dir;
    fs::path checkpoint;
    fs::path recon;
    fs::path out;
    bool validate = false;
};

ExperimentConfig load_config(const ExperimentArgs& a) {
    ExperimentConfig cfg;
    if (!a.config.empty()) {
        try {
            cfg = config_from_json(read_json(a.config));
        } catch (const InvalidInput& e) {
            throw UsageError(a.config.string() + ": " + e.what());
        }
    }
    if (a.task)
        cfg.task = task_from_string(*a.task);
    if (a.seed)
        cfg.seed = *a.seed;
    if (a.iterations)
        cfg.iterations = *a.iterations;
    if (a.pose_count)
        cfg.pose_count = *a.pose_count;
    try {
        cfg.validate();
    } catch (const InvalidInput& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

int cmd_train(const ExperimentArgs& a) {
    const ExperimentConfig cfg = load_config(a);
    ensure_dir(a.out_dir);
    const ExperimentArtifacts art = run_experiment_full(cfg);
    const fs::path config_path = a.out_dir / "config.json";
    const fs::path model_path = a.out_dir / "model.ckpt";
    const fs::path report_path = a.out_dir / "report.json";
    write_json(config_path, config_to_json(cfg));
    save_checkpoint(model_path, model_checkpoint(art.model, cfg.iterations));
    if (art.recon)
        save_checkpoint(a.out_dir / "recon.ckpt", recon_checkpoint(*art.recon, cfg.recon.iterations));
    write_json(report_path, report_to_json(art.report));
    write_file_atomic(a.out_dir / "report.csv",
                      report_csv_header() + "\n" + report_csv_row(art.report) + "\n");
    if (a.validate) {
        validate_output("config", config_path);
        validate_output("checkpoint", model_path);
        validate_output("report", report_path);
        if (art.recon)
            validate_output("checkpoint", a.out_dir / "recon.ckpt");
    }
    json out = summary_of(art.report);
    out["command"] = "train";
    print_json(out);
    return 0;
}

int cmd_eval(const ExperimentArgs& a) {
    const ExperimentConfig cfg = load_config(a);
    const TrainedModel model = model_from_checkpoint(load_checkpoint(a.checkpoint));
    const Dataset data = build_dataset(cfg);
    EvalReport report;
    if (cfg.task == Task::end_to_end) {
        if (a.recon.empty())
            throw UsageError("eval of an end-to-end config needs --recon");
        const ReconModel recon = recon_model_from_checkpoint(load_checkpoint(a.recon));
        report = end_to_end_eval(model, recon, data.test_poses, cfg);
    } else {
        if (model.task != cfg.task)
            throw UsageError("checkpoint was trained for task " + to_string(model.task) +
                             ", config says " + to_string(cfg.task));
        report = evaluate(model, data, cfg);
    }
    if (!a.out.empty()) {
        write_json(a.out, report_to_json(report));
        if (a.validate)
            validate_output("report", a.out);
    }
    json out = summary_of(report);
    out["command"] = "eval";
    print_json(out);
    return 0;
}

// gradcheck -----------------------------------------------------------------

struct GradcheckArgs {
    std::string scope = "all";
    int configs = 100;
    std::uint64_t seed = 0;
    fs::path checkpoint;
    int checkpoint_configs = 3;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    if (a.configs < 1 || a.checkpoint_configs < 1)
        throw UsageError("configuration counts must be at least 1");
    std::optional<Network<double>> net;
    if (!a.checkpoint.empty())
        net = network_from_checkpoint(load_checkpoint(a.checkpoint));
    std::vector<GradcheckSuite> suites = run_gradcheck(a.scope, a.configs, a.seed);
    if (net) {
        GradcheckSuite s = check_network(*net, a.checkpoint_configs, mix_seed({a.seed, 99}));
        s.name = "checkpoint_backprop";
        suites.push_back(s);
    }
    bool ok = true;
    std::printf("gradcheck seed=%llu scope=%s\n", static_cast<unsigned long long>(a.seed),
                a.scope.c_str());
    for (const auto& s : suites) {
        std::printf("%-22s configs=%-4d worst_relative_error=%.3e tolerance=%.0e %s\n",
                    s.name.c_str(), s.configurations, s.worst_relative_error, s.tolerance,
                    s.passed() ? "PASS" : "FAIL");
        ok = ok && s.passed();
    }
    std::fflush(stdout);
    if (!ok)
        throw CheckFailed("gradient check failed");
    return 0;
}

// annotation ----------------------------------------------------------------

struct AnnotatorArgs {
    double error_rate = 0.0;
    double ambiguous_rate = 0.0;
    double tie_threshold = kDefaultTieThresholdMm;

    SimulatedAnnotator annotator() const {
        SimulatedAnnotator s{tie_threshold, error_rate, ambiguous_rate};
        try {
            s.validate();
        } catch (const InvalidInput& e) {
            throw UsageError(e.what());
        }
        return s;
    }
};

struct AnnotateSimArgs {
    fs::path poses;
    int first = 0;
    int count = 1;
    std::uint64_t seed = 0;
    std::string url;
    fs::path out;
    AnnotatorArgs annotator;
    bool validate = false;
};

json session_record(const std::string& item_id, int joint_count, int questions,
                    const json& ordering, const json& relations, bool exact) {
    return {{"item_id", item_id},         {"joint_count", joint_count},
            {"question_count", questions}, {"ordering", ordering},
            {"relations", relations},      {"matches_ground_truth", exact}};
}

json http_call(httplib::Client& client, const std::string& method, const std::string& path,
               const json& body = nullptr) {
    auto res = method == "GET" ? client.Get(path.c_str())
                               : client.Post(path.c_str(), body.dump(), "application/json");
    if (!res)
        throw DataError(method + " " + path + ": " + httplib::to_string(res.error()));
    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception&) {
        throw DataError(method + " " + path + ": non-JSON response");
    }
    if (res->status >= 400)
        throw DataError(method + " " + path + ": HTTP " + std::to_string(res->status) + " " +
                        j.value("error", std::string()));
    return j;
}

json run_over_http(httplib::Client& client, const SimulatedAnnotator& annotator, const Pose3D& pose,
                   const std::string& item_id, std::uint64_t seed) {
    const json created = http_call(client, "POST", "/v1/sessions", {{"item_id", item_id}});
    const std::string base = "/v1/sessions/" + created.at("session_id").get<std::string>();
    json q = http_call(client, "GET", base + "/question");
    while (q.at("status") == "in-progress") {
        const int i = q["question"]["i"].get<int>();
        const int j = q["question"]["j"].get<int>();
        const Answer ans = annotate(annotator, pose, i, j, seed);
        http_call(client, "POST", base + "/answer",
                  {{"answer", to_string(ans)}, {"seq", q["seq"]}, {"i", i}, {"j", j}});
        q = http_call(client, "GET", base + "/question");
    }
    const json relations = http_call(client, "GET", base + "/relations");
    return {{"question_count", q.at("question_count")},
            {"ordering", q.at("ordering")},
            {"relations", relations}};
}

Ordering ordering_from_json_value(const json& j) {
    Ordering out;
    for (const auto& c : j) {
        DepthClass cls;
        cls.members = c.at("members").get<std::vector<int>>();
        cls.soft_tied = c.value("soft_tied", std::vector<int>{});
        out.push_back(std::move(cls));
    }
    return out;
}

int cmd_annotate_sim(const AnnotateSimArgs& a) {
    const SimulatedAnnotator annotator = a.annotator.annotator();
    if (a.first < 0 || a.count < 1)
        throw UsageError("--first must be >= 0 and --count >= 1");
    const auto poses = read_poses_jsonl(a.poses);
    if (static_cast<std::size_t>(a.first + a.count) > poses.size())
        throw UsageError("pose range exceeds the " + std::to_string(poses.size()) + " poses in " +
                         a.poses.string());
    std::optional<httplib::Client> client;
    if (!a.url.empty()) {
        client.emplace(a.url);
        client->set_read_timeout(30, 0);
    }
    json sessions = json::array();
    for (int k = a.first; k < a.first + a.count; ++k) {
        const Pose3D& pose = poses[static_cast<std::size_t>(k)];
        const std::string item = item_id_for(static_cast<std::size_t>(k));
        const std::uint64_t seed = mix_seed({a.seed, static_cast<std::uint64_t>(k)});
        const Ordering truth = depth_classes(pose.col(2), annotator.tie_threshold_mm);
        json rec;
        if (client) {
            rec = run_over_http(*client, annotator, pose, item, seed);
        } else {
            const AnnotationSession s = simulate_session(annotator, pose, item, seed);
            const Ordering fin = final_ordering(s);
            rec = {{"question_count", s.question_count},
                   {"ordering", ordering_to_json(fin)},
                   {"relations", relations_to_json(ordering_to_relations(fin))}};
        }
        const Ordering got = ordering_from_json_value(rec["ordering"]);
        bool exact = got.size() == truth.size();
        for (std::size_t c = 0; exact && c < got.size(); ++c)
            exact = got[c].members == truth[c].members;
        sessions.push_back(session_record(item, static_cast<int>(pose.rows()),
                                          rec["question_count"].get<int>(), rec["ordering"],
                                          rec["relations"], exact));
    }
    const json doc = {{"seed", a.seed},
                      {"annotator",
                       {{"error_rate", annotator.error_rate},
                        {"ambiguous_rate", annotator.ambiguous_rate},
                        {"tie_threshold_mm", annotator.tie_threshold_mm}}},
                      {"sessions", sessions}};
    if (!a.out.empty()) {
        write_json(a.out, doc);
        if (a.validate)
            validate_output("annotations", a.out);
    }
    long questions = 0;
    int exact = 0;
    for (const auto& s : sessions) {
        questions += s["question_count"].get<long>();
        exact += s["matches_ground_truth"].get<bool>() ? 1 : 0;
    }
    print_json({{"command", "annotate-sim"},
                {"seed", a.seed},
                {"transport", client ? "http" : "in-process"},
                {"sessions", sessions.size()},
                {"mean_questions", static_cast<double>(questions) / static_cast<double>(sessions.size())},
                {"exact_orderings", exact}});
    return 0;
}

struct AnnotateCostArgs {
    fs::path poses;
    int count = 10000;
    int joints = 14;
    std::uint64_t seed = 0;
    fs::path csv;
    AnnotatorArgs annotator;
};

int cmd_annotate_cost(const AnnotateCostArgs& a) {
    const SimulatedAnnotator annotator = a.annotator.annotator();
    if (a.count < 1)
        throw UsageError("--count must be at least 1");
    const PoseDistribution dist = default_distribution();
    if (a.joints < 1 || a.joints > dist.skeleton.joint_count())
        throw UsageError("--joints must be in [1, " + std::to_string(dist.skeleton.joint_count()) + "]");
    std::vector<Pose3D> poses = a.poses.empty()
                                    ? sample_poses(dist, a.count, mix_seed({a.seed, 41}))
                                    : read_poses_jsonl(a.poses);
    if (poses.empty())
        throw UsageError("no poses");

    std::ostringstream csv;
    csv << "pose_id,question_count,accuracy\n";
    std::vector<int> counts;
    double accuracy_sum = 0.0;
    int exact = 0;
    for (std::size_t k = 0; k < poses.size(); ++k) {
        const Pose3D pose = poses[k].topRows(a.joints);
        const std::string id = item_id_for(k);
        const AnnotationSession s =
            simulate_session(annotator, pose, id, mix_seed({a.seed, 42, static_cast<std::uint64_t>(k)}));
        const Ordering fin = final_ordering(s);
        const Ordering truth = depth_classes(pose.col(2), annotator.tie_threshold_mm);
        const double acc = ordering_accuracy(fin, truth);
        bool same = fin.size() == truth.size();
        for (std::size_t c = 0; same && c < fin.size(); ++c)
            same = fin[c].members == truth[c].members;
        exact += same ? 1 : 0;
        counts.push_back(s.question_count);
        accuracy_sum += acc;
        char line[96];
        std::snprintf(line, sizeof line, "%s,%d,%.6f\n", id.c_str(), s.question_count, acc);
        csv << line;
    }
    if (a.csv.empty())
        std::cout << csv.str();
    else
        write_file_atomic(a.csv, csv.str());

    std::vector<int> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(m);
    const json summary = {{"command", "annotate-cost"},
                          {"seed", a.seed},
                          {"poses", m},
                          {"joints", a.joints},
                          {"mean_questions", mean},
                          {"median_questions", median},
                          {"max_questions", sorted.back()},
                          {"exhaustive_pairs", a.joints * (a.joints - 1) / 2},
                          {"binary_insertion_bound", binary_insertion_bound(a.joints)},
                          {"reference_mean_questions", 17},
                          {"mean_accuracy", accuracy_sum / static_cast<double>(m)},
                          {"exact_orderings", exact}};
    (a.csv.empty() ? std::cerr : std::cout) << summary.dump() << std::endl;
    return 0;
}

// serve / export ------------------------------------------------------------

struct ServeArgs {
    fs::path registry;
    fs::path data_dir = "sessions";
    int port = 8080;
    std::string host = "127.0.0.1";
    fs::path ui_dir;
};

int cmd_serve(const ServeArgs& a) {
    if (a.port < 0 || a.port > 65535)
        throw UsageError("--port must be in [0, 65535]");
    SessionStore store(a.data_dir, ItemRegistry::load(a.registry));
    std::optional<fs::path> ui;
    if (!a.ui_dir.empty())
        ui = a.ui_dir;
    AnnotationServer server(store, ui);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int port = server.bind(a.host, a.port);
    print_json({{"command", "serve"},
                {"host", a.host},
                {"port", port},
                {"data_dir", a.data_dir.string()},
                {"items", store.registry().items().size()},
                {"sessions", store.session_ids().size()}});
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.listen();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    return 0;
}

struct ExportArgs {
    fs::path registry;
    fs::path data_dir = "sessions";
    std::string session;
    fs::path out;
    bool validate = false;
};

int cmd_export_relations(const ExportArgs& a) {
    SessionStore store(a.data_dir, ItemRegistry::load(a.registry));
    const json relations = store.relations(a.session);
    if (a.out.empty()) {
        std::cout << relations.dump() << std::endl;
    } else {
        write_json(a.out, relations);
        if (a.validate)
            validate_output("relations", a.out);
        print_json({{"command", "export-relations"},
                    {"session_id", a.session},
                    {"pairs", relations.at("pairs").size()},
                    {"out", a.out.string()}});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ordinal depth supervision toolkit"};
    app.require_subcommand(1);
    int code = 0;

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Sample synthetic 3D poses and an item registry");
    g->add_option("--out-dir", gen.out_dir, "Output directory")->required();
    g->add_option("--count", gen.count, "Number of poses")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_option("--sigma-deg", gen.sigma_deg, "Per-joint perturbation sigma (degrees)")
        ->capture_default_str();
    g->add_flag("--validate", gen.validate, "Re-read and check every output file");
    g->callback([&] { code = cmd_gen_data(gen); });

    ExperimentArgs tr;
    std::uint64_t tr_seed = 0;
    long tr_iters = 0;
    int tr_poses = 0;
    std::string tr_task;
    auto* t = app.add_subcommand("train", "Run a training experiment and write its report");
    t->add_option("--config", tr.config, "Experiment config JSON")->check(CLI::ExistingFile);
    const CLI::Validator known_task(
        [](std::string& name) {
            try {
                task_from_string(name);
                return std::string();
            } catch (const InvalidInput& e) {
                return std::string(e.what());
            }
        },
        "TASK");
    auto* t_task = t->add_option("--task", tr_task, "Task override")->check(known_task);
    auto* t_seed = t->add_option("--seed", tr_seed, "Seed override");
    auto* t_iters = t->add_option("--iterations", tr_iters, "Iteration override");
    auto* t_poses = t->add_option("--pose-count", tr_poses, "Pose count override");
    t->add_option("--out-dir", tr.out_dir, "Output directory")->required();
    t->add_flag("--validate", tr.validate, "Re-read and check every output file");
    t->callback([&] {
        if (*t_task) tr.task = tr_task;
        if (*t_seed) tr.seed = tr_seed;
        if (*t_iters) tr.iterations = tr_iters;
        if (*t_poses) tr.pose_count = tr_poses;
        code = cmd_train(tr);
    });

    ExperimentArgs ev;
    std::uint64_t ev_seed = 0;
    int ev_poses = 0;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out split of a config");
    e->add_option("--config", ev.config, "Experiment config JSON")->check(CLI::ExistingFile);
    auto* e_seed = e->add_option("--seed", ev_seed, "Seed override");
    auto* e_poses = e->add_option("--pose-count", ev_poses, "Pose count override");
    e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
    e->add_option("--recon", ev.recon, "Reconstruction checkpoint (end-to-end)");
    e->add_option("--out", ev.out, "Report JSON path");
    e->add_flag("--validate", ev.validate, "Re-read and check every output file");
    e->callback([&] {
        if (*e_seed) ev.seed = ev_seed;
        if (*e_poses) ev.pose_count = ev_poses;
        code = cmd_eval(ev);
    });

    GradcheckArgs gc;
    auto* c = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    c->add_option("--scope", gc.scope, "Suite selection")
        ->check(CLI::IsMember(gradcheck_scopes()))
        ->capture_default_str();
    c->add_option("--configs", gc.configs, "Random configurations per suite")->capture_default_str();
    c->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
    c->add_option("--checkpoint", gc.checkpoint, "Also check backprop of this network checkpoint");
    c->add_option("--checkpoint-configs", gc.checkpoint_configs,
                  "Random batches for the checkpoint check")
        ->capture_default_str();
    c->callback([&] { code = cmd_gradcheck(gc); });

    auto add_annotator = [](CLI::App* sub, AnnotatorArgs& an) {
        sub->add_option("--error-rate", an.error_rate, "Closer/farther flip probability")
            ->capture_default_str();
        sub->add_option("--ambiguous-rate", an.ambiguous_rate, "Ambiguous answer probability")
            ->capture_default_str();
        sub->add_option("--tie-threshold", an.tie_threshold, "Tie threshold (mm)")
            ->capture_default_str();
    };

    AnnotateSimArgs as;
    auto* s = app.add_subcommand("annotate-sim", "Run simulated annotation sessions");
    s->add_option("--poses", as.poses, "Pose JSON-lines file")->required()->check(CLI::ExistingFile);
    s->add_option("--first", as.first, "First pose index")->capture_default_str();
    s->add_option("--count", as.count, "Number of poses")->capture_default_str();
    s->add_option("--seed", as.seed, "Random seed")->capture_default_str();
    s->add_option("--url", as.url, "Drive a running service instead of the in-process scheduler");
    s->add_option("--out", as.out, "Sessions JSON path");
    s->add_flag("--validate", as.validate, "Re-read and check every output file");
    add_annotator(s, as.annotator);
    s->callback([&] { code = cmd_annotate_sim(as); });

    AnnotateCostArgs ac;
    auto* k = app.add_subcommand("annotate-cost", "Question-count study for the scheduler");
    k->add_option("--poses", ac.poses, "Pose JSON-lines file (default: sample --count poses)")
        ->check(CLI::ExistingFile);
    k->add_option("--count", ac.count, "Number of sampled poses")->capture_default_str();
    k->add_option("--joints", ac.joints, "Use the first N joints of each pose")->capture_default_str();
    k->add_option("--seed", ac.seed, "Random seed")->capture_default_str();
    k->add_option("--csv", ac.csv, "CSV output path (default: stdout)");
    add_annotator(k, ac.annotator);
    k->callback([&] { code = cmd_annotate_cost(ac); });

    ServeArgs sv;
    auto* v = app.add_subcommand("serve", "Serve the annotation API");
    v->add_option("--registry", sv.registry, "Item registry JSON")->required()->check(CLI::ExistingFile);
    v->add_option("--data-dir", sv.data_dir, "Session log directory")
        ->envname("ORDINAL_DATA_DIR")
        ->capture_default_str();
    v->add_option("--port", sv.port, "Port (0 picks a free one)")
        ->envname("ORDINAL_PORT")
        ->capture_default_str();
    v->add_option("--host", sv.host, "Bind address")->capture_default_str();
    v->add_option("--ui-dir", sv.ui_dir, "Static UI bundle directory");
    v->callback([&] { code = cmd_serve(sv); });

    ExportArgs ex;
    auto* x = app.add_subcommand("export-relations", "Export the relations of a completed session");
    x->add_option("--registry", ex.registry, "Item registry JSON")->required()->check(CLI::ExistingFile);
    x->add_option("--data-dir", ex.data_dir, "Session log directory")
        ->envname("ORDINAL_DATA_DIR")
        ->capture_default_str();
    x->add_option("--session", ex.session, "Session id")->required();
    x->add_option("--out", ex.out, "Output JSON path (default: stdout)");
    x->add_flag("--validate", ex.validate, "Re-read and check every output file");
    x->callback([&] { code = cmd_export_relations(ex); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const CheckFailed& err) {
        std::cerr << "check failed: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return code;
}
