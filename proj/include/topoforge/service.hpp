#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "topoforge/datagen.hpp"
#include "topoforge/mesh_domain.hpp"
#include "topoforge/networks.hpp"

namespace topoforge {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  std::string model_dir;
  std::size_t http_threads = 8;
  std::size_t simp_workers = 0;  // 0 = hardware threads - 1, at least 1
  std::size_t queue_limit = 8;   // queued SIMP jobs beyond the running ones
  double timeout_seconds = 30.0;
  GridDims simp_cap_2d = GridDims::plane(240, 120);
  GridDims simp_cap_3d = GridDims::volume(40, 40, 40);
  int simp_max_iters = 200;
  std::function<void(const std::string&)> log;  // stderr when empty
};

/// A checkpoint served under `name`, with the channel options it was trained with.
struct ServedModel {
  std::string name;
  Network network;
  ChannelOptions channels;
};

/// Reads `<dir>/*.twgt`; names are file stems.
std::vector<ServedModel> load_model_dir(const std::string& dir);

struct ServiceResponse {
  int status = 200;
  std::string body;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Replaces the whole model set at once; in-flight requests keep the old one.
  void install_models(std::vector<ServedModel> models);
  /// Reloads from config.model_dir; returns the number of models served.
  std::size_t reload_models();

  /// Routes one request without any socket; the HTTP server calls this.
  ServiceResponse handle(std::string_view method, std::string_view path, std::string_view body);

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace topoforge
