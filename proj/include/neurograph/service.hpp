#pragma once

// HTTP service: pipeline runs executed off the request path, graph editing
// with undo, exports, and static hosting of the curation UI.
//
// Each run lives in <runs_dir>/<run_id>/ holding the pipeline dumps,
// graph.json (pipeline output), edits.jsonl (one edit batch per line) and
// status.json, so a restarted service resumes every finished run.

#include <httplib.h>

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "neurograph/graph_edit.hpp"
#include "neurograph/graph_io.hpp"
#include "neurograph/pipeline.hpp"

namespace neurograph {

enum class RunStatus { pending, running, done, failed };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::pending: return "pending";
    case RunStatus::running: return "running";
    case RunStatus::done: return "done";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

inline RunStatus parse_run_status(std::string_view s) {
  if (s == "pending") return RunStatus::pending;
  if (s == "running") return RunStatus::running;
  if (s == "done") return RunStatus::done;
  if (s == "failed") return RunStatus::failed;
  throw Error("unknown run status '" + std::string(s) + "'");
}

class RunNotFound : public Error {
 public:
  explicit RunNotFound(const std::string& id) : Error("unknown run '" + id + "'") {}
};

/// The run is not in a state that allows the request (still running, failed,
/// or nothing to undo).
class RunConflict : public Error {
 public:
  using Error::Error;
};

/// Point-in-time view of a run.
struct RunInfo {
  std::string id;
  RunStatus status = RunStatus::pending;
  std::string error;
  std::string diagnostics;
  std::vector<std::string> stages;
  std::size_t edit_batches = 0;
};

enum class RunImage { image, skeleton, overlay };

/// Runs keyed by id. Edit batches on one run are serialized; reads copy a
/// snapshot under a short lock and never wait for a writer.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    load_existing();
  }

  ~RunStore() {
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(mu_);
      workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
  }

  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Validates the config, assigns the run directory and starts the pipeline
  /// on a worker thread. Throws ConfigError on an invalid config.
  std::string create(PipelineConfig cfg) {
    cfg.output_dir = root_ / "run";
    cfg.dump_intermediates = true;
    validate(cfg);
    auto run = std::make_shared<Run>();
    {
      std::lock_guard lock(mu_);
      run->id = make_id(next_id_++);
    }
    run->dir = root_ / run->id;
    cfg.output_dir = run->dir;
    run->config = cfg;
    std::filesystem::create_directories(run->dir);
    persist_status(*run);
    std::lock_guard lock(mu_);
    runs_.emplace(run->id, run);
    workers_.emplace_back([this, run] { execute(*run); });
    return run->id;
  }

  std::vector<RunInfo> list() const {
    std::vector<std::shared_ptr<Run>> runs;
    {
      std::lock_guard lock(mu_);
      for (const auto& [_, r] : runs_) runs.push_back(r);
    }
    std::vector<RunInfo> out;
    for (const auto& r : runs) out.push_back(info_of(*r));
    return out;
  }

  RunInfo info(const std::string& id) const { return info_of(*get(id)); }

  /// Blocks until the run leaves pending/running.
  RunInfo wait(const std::string& id) const {
    auto run = get(id);
    std::unique_lock lock(run->state_mu);
    run->cv.wait(lock, [&] { return run->status == RunStatus::done || run->status == RunStatus::failed; });
    lock.unlock();
    return info_of(*run);
  }

  ExtractedGraph graph(const std::string& id) const { return *ready(*get(id)).current; }

  /// Edit batches applied so far, oldest first.
  std::vector<std::vector<GraphEdit>> edit_log(const std::string& id) const { return ready(*get(id)).batches; }

  /// Applies the batch atomically. Throws RunConflict while the run is not
  /// done and EditBatchError (graph untouched) when any edit is invalid.
  ExtractedGraph apply(const std::string& id, const std::vector<GraphEdit>& edits) {
    auto run = get(id);
    std::lock_guard writer(run->write_mu);
    const State s = ready(*run);
    auto next = std::make_shared<const ExtractedGraph>(apply_edits(*s.current, edits));
    std::ofstream(run->dir / "edits.jsonl", std::ios::app) << batch_line(edits) << '\n';
    std::lock_guard lock(run->state_mu);
    run->current = std::move(next);
    run->batches.push_back(edits);
    return *run->current;
  }

  /// Reverts the last edit batch by replaying the remaining ones.
  ExtractedGraph undo(const std::string& id) {
    auto run = get(id);
    std::lock_guard writer(run->write_mu);
    State s = ready(*run);
    if (s.batches.empty()) throw RunConflict("run '" + id + "' has no edits to undo");
    s.batches.pop_back();
    auto next = std::make_shared<const ExtractedGraph>(replay(*s.original, s.batches));
    write_edit_log(run->dir, s.batches);
    std::lock_guard lock(run->state_mu);
    run->current = std::move(next);
    run->batches = std::move(s.batches);
    return *run->current;
  }

  /// True when replaying the edit log over the pipeline output reproduces
  /// the served graph, both in memory and from the files on disk.
  bool consistent(const std::string& id) const {
    auto run = get(id);
    const State s = ready(*run);
    if (replay(*s.original, s.batches) != *s.current) return false;
    const auto on_disk = parse(read_text(run->dir / "graph.json"), GraphFormat::json);
    return replay(on_disk, read_edit_log(run->dir)) == *s.current;
  }

  std::vector<std::uint8_t> png(const std::string& id, RunImage which) const {
    auto run = get(id);
    const State s = ready(*run);
    switch (which) {
      case RunImage::image: return png::encode(*s.image);
      case RunImage::skeleton: return png::encode_mask(s.skeleton->mask);
      case RunImage::overlay: return png::encode(render_overlay(*s.base, *s.skeleton, *s.current));
    }
    return {};
  }

  static ExtractedGraph replay(const ExtractedGraph& original, const std::vector<std::vector<GraphEdit>>& batches) {
    ExtractedGraph g = original;
    for (const auto& b : batches) g = apply_edits(g, b);
    return g;
  }

 private:
  struct State {
    RunStatus status = RunStatus::pending;
    std::shared_ptr<const ExtractedGraph> original, current;
    std::vector<std::vector<GraphEdit>> batches;
    std::shared_ptr<const Raster> image, base;
    std::shared_ptr<const Skeleton> skeleton;
  };

  struct Run {
    std::string id;
    std::filesystem::path dir;
    PipelineConfig config;

    std::mutex write_mu;  // one edit batch at a time
    mutable std::mutex state_mu;
    mutable std::condition_variable cv;
    RunStatus status = RunStatus::pending;
    std::string error;
    std::string diagnostics;
    std::vector<std::string> stages;
    std::shared_ptr<const ExtractedGraph> original, current;
    std::vector<std::vector<GraphEdit>> batches;
    std::shared_ptr<const Raster> image, base;
    std::shared_ptr<const Skeleton> skeleton;
  };

  static std::string make_id(std::uint64_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%06llu", static_cast<unsigned long long>(n));
    return buf;
  }

  std::shared_ptr<Run> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw RunNotFound(id);
    return it->second;
  }

  static RunInfo info_of(const Run& r) {
    std::lock_guard lock(r.state_mu);
    return {r.id, r.status, r.error, r.diagnostics, r.stages, r.batches.size()};
  }

  static State ready(const Run& r) {
    std::lock_guard lock(r.state_mu);
    if (r.status != RunStatus::done)
      throw RunConflict("run '" + r.id + "' is " + std::string(to_string(r.status)));
    return {r.status, r.original, r.current, r.batches, r.image, r.base, r.skeleton};
  }

  static std::string batch_line(const std::vector<GraphEdit>& edits) {
    return nlohmann::json{{"edits", to_json(std::span<const GraphEdit>(edits))}}.dump();
  }

  static void write_edit_log(const std::filesystem::path& dir, const std::vector<std::vector<GraphEdit>>& batches) {
    const auto tmp = dir / "edits.jsonl.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& b : batches) out << batch_line(b) << '\n';
    }
    std::filesystem::rename(tmp, dir / "edits.jsonl");
  }

  static std::vector<std::vector<GraphEdit>> read_edit_log(const std::filesystem::path& dir) {
    std::vector<std::vector<GraphEdit>> out;
    std::ifstream in(dir / "edits.jsonl");
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      if (line.empty()) continue;
      try {
        out.push_back(edits_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw Error((dir / "edits.jsonl").string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return out;
  }

  static std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  static void persist_status(const Run& r) {
    nlohmann::json j;
    {
      std::lock_guard lock(r.state_mu);
      j = {{"status", to_string(r.status)}, {"error", r.error}, {"diagnostics", r.diagnostics}, {"stages", r.stages}};
    }
    std::ofstream(r.dir / "status.json", std::ios::trunc) << j.dump(2) << '\n';
  }

  void execute(Run& run) {
    {
      std::lock_guard lock(run.state_mu);
      run.status = RunStatus::running;
    }
    persist_status(run);
    PipelineResult result;
    std::string error;
    try {
      run_pipeline(run.config, result);
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::lock_guard lock(run.state_mu);
      run.stages = result.stages;
      run.diagnostics = result.diagnostics.to_text();
      if (error.empty()) {
        run.original = std::make_shared<const ExtractedGraph>(std::move(result.graph));
        run.current = run.original;
        run.image = std::make_shared<const Raster>(std::move(result.gray));
        run.base = std::make_shared<const Raster>(std::move(result.inpainted));
        run.skeleton = std::make_shared<const Skeleton>(std::move(result.skeleton));
        run.status = RunStatus::done;
      } else {
        run.error = error;
        run.status = RunStatus::failed;
      }
    }
    persist_status(run);
    run.cv.notify_all();
  }

  void load_existing() {
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root_))
      if (e.is_directory() && std::filesystem::exists(e.path() / "status.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      auto run = std::make_shared<Run>();
      run->id = dir.filename().string();
      run->dir = dir;
      const auto status = nlohmann::json::parse(read_text(dir / "status.json"));
      run->status = parse_run_status(status.at("status").get<std::string>());
      run->error = status.value("error", "");
      run->diagnostics = status.value("diagnostics", "");
      run->stages = status.value("stages", std::vector<std::string>{});
      if (std::filesystem::exists(dir / "config.ini")) run->config = load_config(dir / "config.ini");
      if (run->status == RunStatus::pending || run->status == RunStatus::running) {
        run->status = RunStatus::failed;
        run->error = "interrupted by service restart";
        persist_status(*run);
      } else if (run->status == RunStatus::done) {
        try {
          run->original = std::make_shared<const ExtractedGraph>(parse(read_text(dir / "graph.json"), GraphFormat::json));
          run->batches = read_edit_log(dir);
          run->current = std::make_shared<const ExtractedGraph>(replay(*run->original, run->batches));
          run->image = std::make_shared<const Raster>(png::read(dir / (dump_names()[0] + ".png")));
          run->base = std::make_shared<const Raster>(png::read(dir / (dump_names()[2] + ".png")));
          run->skeleton = std::make_shared<const Skeleton>(Skeleton{png::read_mask(dir / (dump_names()[6] + ".png"))});
        } catch (const std::exception& e) {
          run->status = RunStatus::failed;
          run->error = std::string("cannot restore run: ") + e.what();
        }
      }
      unsigned long long n = 0;
      if (std::sscanf(run->id.c_str(), "run-%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
      runs_.emplace(run->id, run);
    }
  }

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::vector<std::thread> workers_;
  std::uint64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// HTTP

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path static_dir;  // UI bundle served at `/` when set
  PipelineConfig defaults;           // base for POST /runs configs
#ifdef NDEBUG
  bool debug_endpoints = false;
#else
  bool debug_endpoints = true;
#endif

  /// NEUROGRAPH_HOST, NEUROGRAPH_PORT, NEUROGRAPH_RUNS_DIR and
  /// NEUROGRAPH_STATIC_DIR override the fields they name.
  ServiceOptions& apply_env() {
    if (const char* v = std::getenv("NEUROGRAPH_HOST"); v && *v) host = v;
    if (const char* v = std::getenv("NEUROGRAPH_PORT"); v && *v) {
      try {
        port = std::stoi(v);
      } catch (const std::exception&) {
        throw ConfigError(std::string("NEUROGRAPH_PORT: not a port number: ") + v);
      }
    }
    if (const char* v = std::getenv("NEUROGRAPH_RUNS_DIR"); v && *v) runs_dir = v;
    if (const char* v = std::getenv("NEUROGRAPH_STATIC_DIR"); v && *v) static_dir = v;
    return *this;
  }
};

/// Config from a JSON object of dotted keys or of sections, applied over `base`.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto text = [](const std::string& key, const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean() || v.is_number()) return v.dump();
    throw ConfigError(key + ": expected a string, number or boolean");
  };
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      for (const auto& [kk, vv] : v.items()) set_config_value(base, k + "." + kk, text(k + "." + kk, vv));
    } else {
      set_config_value(base, k, text(k, v));
    }
  }
  return base;
}

class Service {
 public:
  explicit Service(ServiceOptions opt) : opt_(std::move(opt)), store_(opt_.runs_dir) { routes(); }

  ~Service() { stop(); }

  RunStore& store() noexcept { return store_; }
  httplib::Server& server() noexcept { return server_; }

  /// Binds the listening socket and returns the port.
  int bind() {
    const int port = opt_.port == 0 ? server_.bind_to_any_port(opt_.host) : opt_.port;
    if (opt_.port != 0 && !server_.bind_to_port(opt_.host, opt_.port))
      throw Error("cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
    if (port < 0) throw Error("cannot bind " + opt_.host);
    return port;
  }

  /// Serves until stop(); call bind() first.
  void listen() {
    if (!server_.listen_after_bind()) throw Error("server stopped unexpectedly");
  }

  void stop() { server_.stop(); }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static void send_json(Res& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(Res& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  static nlohmann::json info_json(const RunInfo& i) {
    nlohmann::json j{{"run_id", i.id},
                     {"status", to_string(i.status)},
                     {"diagnostics", i.diagnostics},
                     {"stages", i.stages},
                     {"edit_batches", i.edit_batches}};
    if (!i.error.empty()) j["error"] = i.error;
    return j;
  }

  // Maps store exceptions onto status codes.
  template <typename F>
  static httplib::Server::Handler guarded(F body) {
    return [body](const Req& req, Res& res) {
      try {
        body(req, res);
      } catch (const RunNotFound& e) {
        send_error(res, 404, e.what());
      } catch (const RunConflict& e) {
        send_error(res, 409, e.what());
      } catch (const EditBatchError& e) {
        send_json(res, 422, {{"error", e.cause()}, {"index", e.index()}});
      } catch (const ConfigError& e) {
        send_error(res, 400, e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    auto& s = server_;
    s.Post("/runs", guarded([this](const Req& req, Res& res) {
      const auto body = nlohmann::json::parse(req.body);
      if (!body.is_object() || !body.contains("config")) throw ConfigError("body must be {\"config\": {...}}");
      const auto id = store_.create(config_from_json(body["config"], opt_.defaults));
      send_json(res, 202, {{"run_id", id}, {"status", "pending"}});
    }));
    s.Get("/runs", guarded([this](const Req&, Res& res) {
      nlohmann::json runs = nlohmann::json::array();
      for (const auto& i : store_.list()) runs.push_back(info_json(i));
      send_json(res, 200, {{"runs", runs}});
    }));
    s.Get(R"(/runs/([^/]+))", guarded([this](const Req& req, Res& res) {
      send_json(res, 200, info_json(store_.info(req.matches[1])));
    }));
    for (auto [path, which] : {std::pair{"image", RunImage::image}, std::pair{"skeleton", RunImage::skeleton},
                               std::pair{"overlay", RunImage::overlay}}) {
      s.Get(std::string(R"(/runs/([^/]+)/)") + path, guarded([this, which](const Req& req, Res& res) {
        const auto bytes = store_.png(req.matches[1], which);
        res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
      }));
    }
    s.Get(R"(/runs/([^/]+)/graph)", guarded([this](const Req& req, Res& res) {
      send_json(res, 200, to_json(store_.graph(req.matches[1])));
    }));
    s.Get(R"(/runs/([^/]+)/edits)", guarded([this](const Req& req, Res& res) {
      nlohmann::json batches = nlohmann::json::array();
      for (const auto& b : store_.edit_log(req.matches[1])) batches.push_back(to_json(std::span<const GraphEdit>(b)));
      send_json(res, 200, {{"batches", batches}});
    }));
    s.Post(R"(/runs/([^/]+)/edits)", guarded([this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      store_.info(id);  // 404 before body errors
      const auto edits = edits_from_json(nlohmann::json::parse(req.body));
      send_json(res, 200, to_json(store_.apply(id, edits)));
    }));
    s.Post(R"(/runs/([^/]+)/undo)", guarded([this](const Req& req, Res& res) {
      send_json(res, 200, to_json(store_.undo(req.matches[1])));
    }));
    s.Get(R"(/runs/([^/]+)/export)", guarded([this](const Req& req, Res& res) {
      const std::string fmt = req.has_param("format") ? req.get_param_value("format") : "json";
      if (fmt != "json" && fmt != "graphml") return send_error(res, 400, "format must be graphml or json");
      const std::string id = req.matches[1];
      const auto format = parse_graph_format(fmt);
      res.set_content(serialize(store_.graph(id), format),
                      format == GraphFormat::json ? "application/json" : "application/graphml+xml");
      res.set_header("Content-Disposition", "attachment; filename=\"" + id + "." + fmt + "\"");
    }));
    if (opt_.debug_endpoints) {
      s.Get(R"(/runs/([^/]+)/integrity)", guarded([this](const Req& req, Res& res) {
        send_json(res, 200, {{"consistent", store_.consistent(req.matches[1])}});
      }));
    }
    if (!opt_.static_dir.empty() && std::filesystem::is_directory(opt_.static_dir)) {
      s.set_mount_point("/", opt_.static_dir.string());
    } else {
      s.Get("/", [](const Req&, Res& res) {
        res.set_content(
            "<!doctype html><title>neurograph</title><p>neurograph service. No UI bundle is configured; "
            "set NEUROGRAPH_STATIC_DIR or --static. API under <code>/runs</code>.</p>",
            "text/html");
      });
    }
  }

  ServiceOptions opt_;
  RunStore store_;
  httplib::Server server_;
};

}  // namespace neurograph
