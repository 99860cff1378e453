#include <algorithm>
#include <filesystem>
#include <future>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "topoforge/problem_io.hpp"
#include "topoforge/service.hpp"

// After the project headers: resolv.h, pulled in here, defines a macro that
// collides with Eigen internals.
#include <httplib.h>

namespace topoforge {
namespace {

using nlohmann::json;

std::string cantilever_request(int nx, int ny, double volfrac = 0.5) {
  const auto dims = GridDims::plane(nx, ny);
  DesignDomain d = make_domain(dims, full_mask(dims));
  PointLoad load;
  load.node = d.node_index(nx, ny / 2);
  load.force = {0.0, -1.0, 0.0};
  BoundaryConditions bc = standard_bc_case(d, BcCase::Cantilever, load);
  return problem_to_json({std::move(d), std::move(bc), volfrac});
}

ServiceConfig quiet_config() {
  ServiceConfig c;
  c.port = 0;
  c.log = [](const std::string&) {};
  return c;
}

ServedModel desk_model() {
  return {"desk", build_source(2, GridDims::plane(80, 40), {}, 3), {}};
}

TEST(Service, ModelsListStartsEmpty) {
  Service s(quiet_config());
  const auto r = s.handle("GET", "/models", "");
  EXPECT_EQ(r.status, 200);
  const json j = json::parse(r.body);
  EXPECT_EQ(j["v"], 1);
  EXPECT_TRUE(j["models"].empty());
}

TEST(Service, PredictWithoutModelIs503) {
  Service s(quiet_config());
  const auto r = s.handle("POST", "/predict", cantilever_request(80, 40));
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(json::parse(r.body)["error"], "WeightsNotLoaded");
}

TEST(Service, PredictReturnsRasterAndBinary) {
  Service s(quiet_config());
  s.install_models({desk_model()});
  const auto r = s.handle("POST", "/predict", cantilever_request(80, 40));
  ASSERT_EQ(r.status, 200) << r.body;
  const json j = json::parse(r.body);
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["model"], "desk");
  EXPECT_EQ(j["dims"], json::array({40, 80}));
  EXPECT_EQ(j["metrics_available"], false);
  const auto rho = decode_f32(j["densities"].get<std::string>(), 3200);
  const auto bin = decode_mask(j["binary"].get<std::string>(), 3200);
  for (std::size_t e = 0; e < rho.size(); ++e) {
    ASSERT_GE(rho[e], 0.0);
    ASSERT_LE(rho[e], 1.0);
    ASSERT_EQ(bin[e], rho[e] >= 0.5);
  }
  EXPECT_EQ(j["problem"].dump(), cantilever_request(80, 40));
}

TEST(Service, PredictForUnservedDimsIs503) {
  Service s(quiet_config());
  s.install_models({desk_model()});
  EXPECT_EQ(s.handle("POST", "/predict", cantilever_request(40, 20)).status, 503);
}

TEST(Service, MalformedRequestsAre400) {
  Service s(quiet_config());
  s.install_models({desk_model()});
  EXPECT_EQ(s.handle("POST", "/predict", "{not json").status, 400);
  EXPECT_EQ(s.handle("POST", "/predict", R"({"dims":[40,80]})").status, 400);
  EXPECT_EQ(s.handle("POST", "/predict", R"({"v":1,"dims":"x"})").status, 400);
  EXPECT_EQ(s.handle("POST", "/predict", cantilever_request(80, 40, 1.5)).status, 400);
  EXPECT_EQ(s.handle("GET", "/nowhere", "").status, 404);
}

TEST(Service, IllPosedProblemsAre422) {
  Service s(quiet_config());
  s.install_models({desk_model()});
  EXPECT_EQ(s.handle("POST", "/predict", R"({"v":1,"dims":[40,80],"fixed":[],"loads":[[0,[0,-1]]]})").status, 422);
  EXPECT_EQ(s.handle("POST", "/simp", R"({"v":1,"dims":[4,8],"fixed":[[0,0],[0,1]],"loads":[]})").status, 422);
  EXPECT_EQ(s.handle("POST", "/simp", R"({"v":1,"dims":[4,8],"loads":[[999,[0,-1]]]})").status, 422);
}

TEST(Service, SimpBeyondCapIs422WithReason) {
  Service s(quiet_config());
  const auto r = s.handle("POST", "/simp", cantilever_request(250, 100));
  EXPECT_EQ(r.status, 422);
  const std::string msg = json::parse(r.body)["message"];
  EXPECT_NE(msg.find("limited to 120x240"), std::string::npos) << msg;
}

TEST(Service, SimpReturnsDensitiesAndHistory) {
  Service s(quiet_config());
  const auto r = s.handle("POST", "/simp", cantilever_request(12, 4));
  ASSERT_EQ(r.status, 200) << r.body;
  const json j = json::parse(r.body);
  const int iters = j["iterations"];
  EXPECT_GT(iters, 0);
  EXPECT_EQ(j["compliance_history"].size(), static_cast<std::size_t>(iters));
  const auto rho = decode_f32(j["densities"].get<std::string>(), 48);
  double mean = 0.0;
  for (double v : rho) mean += v / 48.0;
  EXPECT_NEAR(mean, 0.5, 0.01);
}

TEST(Service, RefineWarmStartsFromGivenPrediction) {
  Service s(quiet_config());
  const auto cold = json::parse(s.handle("POST", "/simp", cantilever_request(12, 4)).body);
  json req{{"v", 1}, {"problem", json::parse(cantilever_request(12, 4))}, {"prediction", cold["densities"]}};
  const auto r = s.handle("POST", "/refine", req.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const json j = json::parse(r.body);
  EXPECT_EQ(j["warm_start"], "request");
  EXPECT_LE(j["iterations"].get<int>(), cold["iterations"].get<int>());
  req.erase("prediction");
  EXPECT_EQ(s.handle("POST", "/refine", req.dump()).status, 503);
}

TEST(Service, SlowSimpTimesOutWith504) {
  ServiceConfig c = quiet_config();
  c.timeout_seconds = 0.02;
  Service s(c);
  const auto r = s.handle("POST", "/simp", cantilever_request(120, 40));
  EXPECT_EQ(r.status, 504);
}

TEST(Service, QueueOverflowIs429) {
  ServiceConfig c = quiet_config();
  c.simp_workers = 1;
  c.queue_limit = 1;
  c.timeout_seconds = 0.5;
  Service s(c);
  std::vector<std::future<int>> calls;
  for (int i = 0; i < 4; ++i) {
    calls.push_back(std::async(std::launch::async, [&] {
      return s.handle("POST", "/simp", cantilever_request(120, 40)).status;
    }));
  }
  std::vector<int> codes;
  for (auto& f : calls) codes.push_back(f.get());
  EXPECT_GE(std::count(codes.begin(), codes.end(), 429), 1);
}

TEST(Service, ModelSwapIsVisibleToLaterRequests) {
  Service s(quiet_config());
  s.install_models({desk_model()});
  EXPECT_EQ(json::parse(s.handle("GET", "/models", "").body)["models"].size(), 1u);
  s.install_models({});
  EXPECT_EQ(json::parse(s.handle("GET", "/models", "").body)["models"].size(), 0u);
}

TEST(Service, ReloadsCheckpointsFromDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "topoforge_models_test";
  std::filesystem::create_directories(dir);
  FilterPlan tiny{{2, 2, 2, 2, 2, 2, 2, 2}, {2, 2, 2, 2, 2, 2, 2}, {2, 2, 2}, {2, 2, 1}};
  save_network((dir / "small.twgt").string(), build_source(2, GridDims::plane(8, 4), tiny, 1),
               R"({"channels":{"normalize_forces":true,"force_scale":100}})");
  ServiceConfig c = quiet_config();
  c.model_dir = dir.string();
  Service s(c);
  EXPECT_EQ(s.reload_models(), 1u);
  const json models = json::parse(s.handle("GET", "/models", "").body)["models"];
  EXPECT_EQ(models[0]["name"], "small");
  EXPECT_EQ(models[0]["dims"], json::array({4, 8}));
  EXPECT_EQ(models[0]["normalize_forces"], true);
  std::filesystem::remove_all(dir);
}

class ServiceHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<Service>(quiet_config());
    service_->install_models({desk_model()});
    port_ = service_->start();
  }
  void TearDown() override { service_->stop(); }

  std::unique_ptr<Service> service_;
  int port_ = 0;
};

TEST_F(ServiceHttp, ConcurrentIdenticalPredictionsAgree) {
  const std::string body = cantilever_request(80, 40);
  std::vector<std::future<std::pair<int, std::string>>> calls;
  for (int i = 0; i < 8; ++i) {
    calls.push_back(std::async(std::launch::async, [&] {
      httplib::Client cli("127.0.0.1", port_);
      cli.set_read_timeout(30, 0);
      auto res = cli.Post("/predict", body, "application/json");
      return res ? std::make_pair(res->status, res->body) : std::make_pair(-1, std::string());
    }));
  }
  std::vector<std::pair<int, std::string>> out;
  for (auto& f : calls) out.push_back(f.get());
  for (const auto& r : out) {
    EXPECT_EQ(r.first, 200);
    EXPECT_EQ(r.second, out[0].second);
  }
}

TEST_F(ServiceHttp, PredictOn40x80IsUnder250msServerSide) {
  httplib::Client cli("127.0.0.1", port_);
  const std::string body = cantilever_request(80, 40);
  std::vector<double> ms;
  for (int i = 0; i < 5; ++i) {
    auto res = cli.Post("/predict", body, "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    ms.push_back(std::stod(res->get_header_value("X-Elapsed-Ms")));
  }
  std::sort(ms.begin(), ms.end());
  EXPECT_LT(ms[2], 250.0);
}

TEST_F(ServiceHttp, ModelsOverHttp) {
  httplib::Client cli("127.0.0.1", port_);
  auto res = cli.Get("/models");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["models"][0]["name"], "desk");
}

}  // namespace
}  // namespace topoforge
