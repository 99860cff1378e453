#include "topoforge/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <iostream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "topoforge/error.hpp"
#include "topoforge/problem_io.hpp"
#include "topoforge/simp.hpp"

namespace topoforge {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

json dims_json(const GridDims& d) {
  return d.rank == 3 ? json::array({d.ny, d.nx, d.nz}) : json::array({d.ny, d.nx});
}

ServiceResponse reply(int status, const json& body) { return {status, body.dump()}; }

ServiceResponse error_reply(int status, std::string_view code, const std::string& message) {
  return reply(status, {{"v", 1}, {"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::FormatError:
    case ErrorCode::InvalidArgument:
      return 400;
    case ErrorCode::WeightsNotLoaded:
      return 503;
    case ErrorCode::Cancelled:
      return 504;
    case ErrorCode::IoError:
    case ErrorCode::ChecksumMismatch:
      return 500;
    default:
      return 422;
  }
}

ServiceResponse from_error(const Error& e) { return error_reply(status_for(e.code()), to_string(e.code()), e.what()); }

json parse_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::FormatError, "request body must be a JSON object");
  if (!j.contains("v") || j["v"] != 1) fail(ErrorCode::FormatError, "request must carry \"v\":1");
  return j;
}

Problem checked_problem(const json& j) {
  Problem p = problem_from_json(j.dump());
  if (!(p.volfrac > 0.0 && p.volfrac < 1.0)) fail(ErrorCode::InvalidArgument, "volfrac must lie in (0, 1)");
  if (p.bc.fixed.empty()) fail(ErrorCode::SingularSystem, "ill-posed problem: no fixed degrees of freedom");
  if (p.bc.loads.empty()) fail(ErrorCode::SingularSystem, "ill-posed problem: no loads");
  return p;
}

ChannelOptions channels_from_extra(const std::string& extra) {
  ChannelOptions c;
  const json j = json::parse(extra.empty() ? "{}" : extra, nullptr, false);
  if (j.is_object() && j.contains("channels")) {
    c.normalize_forces = j["channels"].value("normalize_forces", false);
    c.force_scale = j["channels"].value("force_scale", 100.0);
  }
  return c;
}

bool within_cap(const GridDims& dims, const GridDims& cap) {
  auto sorted = [](const GridDims& d) {
    std::vector<int> v{d.nx, d.ny};
    if (d.rank == 3) v.push_back(d.nz);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted(dims);
  const auto b = sorted(cap);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
  }
  return true;
}

json simp_json(const DesignDomain& domain, const SimpResult& r) {
  const std::vector<double> raster = to_raster(domain, r.densities);
  std::vector<std::uint8_t> binary(raster.size());
  for (std::size_t e = 0; e < raster.size(); ++e) binary[e] = raster[e] >= 0.5;
  return {{"v", 1},
          {"dims", dims_json(domain.dims())},
          {"densities", encode_f32(raster)},
          {"binary", encode_mask(binary)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"compliance_history", r.compliance_history},
          {"volume_history", r.volume_history}};
}

class JobPool {
 public:
  JobPool(std::size_t workers, std::size_t queue_limit) : queue_limit_(queue_limit) {
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }

  ~JobPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  bool submit(std::function<void()> job) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= queue_limit_) return false;
      queue_.push_back(std::move(job));
    }
    cv_.notify_one();
    return true;
  }

 private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  std::size_t queue_limit_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

using ModelSet = std::vector<std::shared_ptr<const ServedModel>>;

}  // namespace

std::vector<ServedModel> load_model_dir(const std::string& dir) {
  std::vector<ServedModel> out;
  if (dir.empty()) return out;
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::IoError, "model directory '" + dir + "' does not exist");
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".twgt") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    std::string extra;
    Network net = load_network(p.string(), &extra);
    out.push_back({p.stem().string(), std::move(net), channels_from_extra(extra)});
  }
  return out;
}

struct Service::Impl {
  ServiceConfig config;
  std::mutex models_mutex;
  std::shared_ptr<const ModelSet> models = std::make_shared<ModelSet>();
  std::unique_ptr<JobPool> pool;
  std::unique_ptr<httplib::Server> server;
  std::thread server_thread;

  void log(const std::string& line) {
    if (config.log) {
      config.log(line);
    } else {
      static std::mutex m;
      std::lock_guard lock(m);
      std::cerr << line << '\n';
    }
  }

  std::shared_ptr<const ModelSet> snapshot() {
    std::lock_guard lock(models_mutex);
    return models;
  }

  std::shared_ptr<const ServedModel> pick(const ModelSet& set, const json& req, const GridDims& dims) {
    if (set.empty()) fail(ErrorCode::WeightsNotLoaded, "no model is loaded");
    if (req.contains("model")) {
      const std::string name = req["model"].is_string() ? req["model"].get<std::string>() : "";
      for (const auto& m : set) {
        if (m->name == name) return m;
      }
      fail(ErrorCode::WeightsNotLoaded, "model '" + name + "' is not loaded");
    }
    for (const auto& m : set) {
      if (m->network.spec.output_dims == dims) return m;
    }
    fail(ErrorCode::WeightsNotLoaded, "no loaded model predicts at " + dims_to_string(dims));
  }

  ServiceResponse models_route() {
    json list = json::array();
    for (const auto& m : *snapshot()) {
      const NetworkSpec& s = m->network.spec;
      list.push_back({{"name", m->name},
                      {"kind", s.kind == NetworkKind::Source ? "source" : "target"},
                      {"rank", s.rank},
                      {"dims", dims_json(s.output_dims)},
                      {"body_dims", dims_json(s.body_dims)},
                      {"in_channels", s.in_channels},
                      {"transferred_layers", s.transferred},
                      {"transferred_hash", s.transferred_hash},
                      {"normalize_forces", m->channels.normalize_forces}});
    }
    return reply(200, {{"v", 1}, {"models", list}});
  }

  ServiceResponse predict_route(std::string_view body) {
    const json req = parse_body(body);
    const Problem p = checked_problem(req);
    const auto set = snapshot();
    const auto model = pick(*set, req, p.domain.dims());
    const Prediction pred = predict(model->network, p.domain, p.bc, p.volfrac, model->channels);
    return reply(200, {{"v", 1},
                       {"model", model->name},
                       {"dims", dims_json(p.domain.dims())},
                       {"densities", encode_f32(pred.densities)},
                       {"binary", encode_mask(pred.binary)},
                       {"metrics_available", false},
                       {"problem", json::parse(problem_to_json(p))}});
  }

  // Runs `work` on the SIMP pool under the request timeout.
  ServiceResponse run_job(std::function<ServiceResponse(const std::function<bool()>&)> work) {
    struct JobState {
      std::promise<ServiceResponse> promise;
      std::atomic<bool> cancel{false};
    };
    auto state = std::make_shared<JobState>();
    auto future = state->promise.get_future();
    const bool accepted = pool->submit([state, work = std::move(work)] {
      ServiceResponse r;
      try {
        r = work([state] { return state->cancel.load(); });
      } catch (const Error& e) {
        r = from_error(e);
      } catch (const std::exception& e) {
        r = error_reply(500, "Internal", e.what());
      }
      state->promise.set_value(std::move(r));
    });
    if (!accepted) return error_reply(429, "QueueFull", "SIMP queue is full; retry later");
    const auto timeout = std::chrono::duration<double>(config.timeout_seconds);
    if (future.wait_for(timeout) != std::future_status::ready) {
      state->cancel = true;
      return error_reply(504, "Timeout", "request exceeded " + std::to_string(config.timeout_seconds) + " s");
    }
    return future.get();
  }

  void check_cap(const GridDims& dims) {
    const GridDims& cap = dims.rank == 3 ? config.simp_cap_3d : config.simp_cap_2d;
    if (!within_cap(dims, cap)) {
      fail(ErrorCode::DimensionMismatch, "SIMP over HTTP is limited to " + dims_to_string(cap) + " elements; " +
                                             dims_to_string(dims) + " must go through the command line");
    }
  }

  SimpConfig simp_config(const json& req, double volfrac, const std::function<bool()>& cancelled) {
    SimpConfig c;
    c.volfrac = volfrac;
    c.max_iters = std::min(req.value("max_iters", config.simp_max_iters), config.simp_max_iters);
    c.filter_radius = req.value("rmin", c.filter_radius);
    c.cancelled = cancelled;
    c.validate();
    return c;
  }

  ServiceResponse simp_route(std::string_view body) {
    const json req = parse_body(body);
    auto p = std::make_shared<Problem>(checked_problem(req));
    check_cap(p->domain.dims());
    return run_job([this, p, req](const std::function<bool()>& cancelled) {
      const SimpResult r = optimize(p->domain, p->bc, MaterialModel{}, simp_config(req, p->volfrac, cancelled));
      return reply(200, simp_json(p->domain, r));
    });
  }

  ServiceResponse refine_route(std::string_view body) {
    const json req = parse_body(body);
    if (!req.contains("problem") || !req["problem"].is_object()) fail(ErrorCode::FormatError, "refine needs a problem object");
    json problem_json = req["problem"];
    problem_json["v"] = 1;
    auto p = std::make_shared<Problem>(checked_problem(problem_json));
    check_cap(p->domain.dims());
    std::vector<double> initial;
    std::string source = "request";
    if (req.contains("prediction")) {
      if (!req["prediction"].is_string()) fail(ErrorCode::FormatError, "prediction must be base64 f32");
      initial = decode_f32(req["prediction"].get<std::string>(), p->domain.element_count());
    } else {
      const auto set = snapshot();
      const auto model = pick(*set, req, p->domain.dims());
      initial = predict(model->network, p->domain, p->bc, p->volfrac, model->channels).densities;
      source = model->name;
    }
    return run_job([this, p, req, initial, source](const std::function<bool()>& cancelled) {
      const std::vector<double> start = from_raster(p->domain, initial);
      const SimpResult r = optimize(p->domain, p->bc, MaterialModel{}, simp_config(req, p->volfrac, cancelled),
                                    std::span<const double>(start));
      json out = simp_json(p->domain, r);
      out["warm_start"] = source;
      return reply(200, out);
    });
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.simp_workers == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    config.simp_workers = hw > 1 ? hw - 1 : 1;
  }
  if (config.http_threads == 0) fail(ErrorCode::InvalidArgument, "http_threads must be positive");
  if (!(config.timeout_seconds > 0.0)) fail(ErrorCode::InvalidArgument, "timeout must be positive");
  impl_->config = std::move(config);
  impl_->pool = std::make_unique<JobPool>(impl_->config.simp_workers, impl_->config.queue_limit);
}

Service::~Service() { stop(); }

void Service::install_models(std::vector<ServedModel> models) {
  auto set = std::make_shared<ModelSet>();
  for (auto& m : models) {
    if (!m.network.loaded()) fail(ErrorCode::WeightsNotLoaded, "model '" + m.name + "' has no weights");
    set->push_back(std::make_shared<const ServedModel>(std::move(m)));
  }
  std::lock_guard lock(impl_->models_mutex);
  impl_->models = std::move(set);
}

std::size_t Service::reload_models() {
  auto models = load_model_dir(impl_->config.model_dir);
  const std::size_t n = models.size();
  install_models(std::move(models));
  impl_->log(json({{"v", 1}, {"event", "models_loaded"}, {"count", n}, {"dir", impl_->config.model_dir}}).dump());
  return n;
}

ServiceResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) {
  const auto t0 = Clock::now();
  ServiceResponse r;
  try {
    if (method == "GET" && path == "/models") {
      r = impl_->models_route();
    } else if (method == "POST" && path == "/predict") {
      r = impl_->predict_route(body);
    } else if (method == "POST" && path == "/simp") {
      r = impl_->simp_route(body);
    } else if (method == "POST" && path == "/refine") {
      r = impl_->refine_route(body);
    } else {
      r = error_reply(404, "NotFound", std::string(method) + " " + std::string(path) + " is not a route");
    }
  } catch (const Error& e) {
    r = from_error(e);
  } catch (const json::exception& e) {
    r = error_reply(400, "FormatError", e.what());
  } catch (const std::exception& e) {
    r = error_reply(500, "Internal", e.what());
  }
  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  impl_->log(json({{"v", 1},
                   {"method", method},
                   {"path", path},
                   {"status", r.status},
                   {"request_bytes", body.size()},
                   {"response_bytes", r.body.size()},
                   {"ms", ms}})
                 .dump());
  return r;
}

int Service::start() {
  if (impl_->server) fail(ErrorCode::InvalidArgument, "service already started");
  auto server = std::make_unique<httplib::Server>();
  const std::size_t threads = impl_->config.http_threads;
  server->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server->set_payload_max_length(64u << 20);
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto t0 = Clock::now();
    const ServiceResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("X-Elapsed-Ms", std::to_string(std::chrono::duration<double, std::milli>(Clock::now() - t0).count()));
    res.set_content(r.body, "application/json");
  };
  server->Get(R"(/.*)", route);
  server->Post(R"(/.*)", route);
  server->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });
  int port = impl_->config.port;
  if (port == 0) {
    port = server->bind_to_any_port(impl_->config.host);
    if (port < 0) fail(ErrorCode::IoError, "could not bind " + impl_->config.host);
  } else if (!server->bind_to_port(impl_->config.host, port)) {
    fail(ErrorCode::IoError, "could not bind " + impl_->config.host + ":" + std::to_string(port));
  }
  impl_->server = std::move(server);
  impl_->server_thread = std::thread([s = impl_->server.get()] { s->listen_after_bind(); });
  impl_->server->wait_until_ready();
  impl_->log(json({{"v", 1}, {"event", "listening"}, {"host", impl_->config.host}, {"port", port}}).dump());
  return port;
}

void Service::stop() {
  if (!impl_ || !impl_->server) return;
  impl_->server->stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
  impl_->server.reset();
}

}  // namespace topoforge
