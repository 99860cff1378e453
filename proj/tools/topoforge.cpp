#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"
#include "topoforge/eval_metrics.hpp"
#include "topoforge/networks.hpp"
#include "topoforge/problem_io.hpp"
#include "topoforge/service.hpp"
#include "topoforge/simp.hpp"

using namespace topoforge;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Command-line grids are given x first: --dims nx,ny[,nz].
GridDims dims_from_flag(const std::vector<int>& v) {
  for (int x : v) {
    if (x < 1) fail(ErrorCode::InvalidArgument, "--dims entries must be positive");
  }
  if (v.size() == 2) return GridDims::plane(v[0], v[1]);
  if (v.size() == 3) return GridDims::volume(v[0], v[1], v[2]);
  fail(ErrorCode::InvalidArgument, "--dims takes nx,ny or nx,ny,nz");
}

std::vector<std::uint8_t> shaped_mask(const GridDims& dims, const std::string& shape) {
  if (shape == "full") return full_mask(dims);
  if (shape == "lshape") return l_shape_mask(dims);
  fail(ErrorCode::InvalidArgument, "unknown --shape '" + shape + "' (full, lshape)");
}

std::string hash_of(const json& config) { return sha256_hex(config.dump()); }

// Problem flags shared by simp and predict.
struct ProblemFlags {
  std::string problem_path;
  std::vector<int> dims;
  std::string shape = "full";
  std::string bc_case = "cantilever";
  std::vector<int> load;
  std::vector<double> force;
  double volfrac = 0.5;

  void add(CLI::App* cmd) {
    cmd->add_option("--problem", problem_path, "Problem JSON; replaces the flags below")->check(CLI::ExistingFile);
    cmd->add_option("--dims", dims, "Grid as nx,ny[,nz]")->delimiter(',')->expected(2, 3);
    cmd->add_option("--shape", shape, "Domain shape: full or lshape")->capture_default_str();
    cmd->add_option("--case", bc_case, "cantilever, simply-supported, constrained-cantilever, dome")
        ->capture_default_str();
    cmd->add_option("--load", load, "Load node i,j[,k]; default depends on the case")->delimiter(',');
    cmd->add_option("--force", force, "Force vector in Newtons; default 0,-1[,0]")->delimiter(',');
    cmd->add_option("--volfrac", volfrac, "Target volume fraction")->capture_default_str();
  }

  json to_json() const {
    if (!problem_path.empty()) return {{"problem", sha256_hex(read_file(problem_path))}};
    return {{"dims", dims}, {"shape", shape}, {"case", bc_case}, {"load", load}, {"force", force}, {"volfrac", volfrac}};
  }

  Problem build(std::optional<double> volfrac_override = std::nullopt) const {
    if (!problem_path.empty()) {
      const auto bytes = read_file(problem_path);
      Problem p = problem_from_json(std::string(bytes.begin(), bytes.end()));
      if (volfrac_override) p.volfrac = *volfrac_override;
      return p;
    }
    if (dims.empty()) fail(ErrorCode::InvalidArgument, "give --problem or --dims");
    const GridDims d = dims_from_flag(dims);
    DesignDomain domain = make_domain(d, shaped_mask(d, shape));
    const BcCase c = bc_case_from_string(bc_case);
    const int kmid = d.rank == 3 ? d.nz / 2 : 0;
    std::vector<int> at = load;
    if (at.empty()) {
      switch (c) {
        case BcCase::Cantilever:
        case BcCase::ConstrainedCantilever:
          at = {d.nx, d.ny / 2, kmid};
          break;
        default:
          at = {d.nx / 2, d.ny, kmid};
      }
    }
    if (at.size() == 2) at.push_back(0);
    if (at.size() != 3 || (d.rank == 2 && at[2] != 0)) fail(ErrorCode::InvalidArgument, "--load takes i,j[,k]");
    for (int a = 0; a < 3; ++a) {
      const int hi = a == 0 ? d.nx : a == 1 ? d.ny : (d.rank == 3 ? d.nz : 0);
      if (at[static_cast<std::size_t>(a)] < 0 || at[static_cast<std::size_t>(a)] > hi) {
        fail(ErrorCode::LoadOutsideDomain, "--load lies outside the node grid");
      }
    }
    PointLoad pl;
    pl.node = domain.node_index(at[0], at[1], at[2]);
    if (force.empty()) {
      pl.force = {0.0, -1.0, 0.0};
    } else {
      if (force.size() != static_cast<std::size_t>(d.rank)) fail(ErrorCode::InvalidArgument, "--force needs one value per axis");
      for (std::size_t a = 0; a < force.size(); ++a) pl.force[a] = force[a];
    }
    BoundaryConditions bc = standard_bc_case(domain, c, pl);
    return {std::move(domain), std::move(bc), volfrac};
  }
};

struct TrainFlags {
  int epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int patience = 0;
  double val_fraction = 0.1;
  std::vector<std::string> mirror;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--batch", batch)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "ADAM step size")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--patience", patience, "Early stop after this many epochs without gain; 0 = off")
        ->capture_default_str();
    cmd->add_option("--val-fraction", val_fraction, "Validation share carved from the training split")
        ->capture_default_str();
    cmd->add_option("--mirror", mirror, "Augment training with mirror images across x, y and/or z")
        ->delimiter(',')
        ->check(CLI::IsMember({"x", "y", "z"}));
  }

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.batch = batch;
    c.adam.alpha = lr;
    c.seed = seed;
    c.patience = patience;
    c.validation_fraction = val_fraction;
    for (const auto& m : mirror) c.mirror_axes.push_back(m == "x" ? 0 : m == "y" ? 1 : 2);
    c.on_epoch = [](int epoch, double train, double val) {
      std::cerr << json({{"v", 1}, {"epoch", epoch}, {"train_loss", train}, {"val_loss", val}}).dump() << '\n';
    };
    return c;
  }

  json to_json() const {
    return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"seed", seed},
            {"patience", patience}, {"val_fraction", val_fraction}, {"mirror", mirror}};
  }
};

json history_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"best_epoch", h.best_epoch},
          {"best_loss", h.best_loss},   {"epochs_run", h.epochs_run}, {"seconds", h.seconds}};
}

json channels_json(const ChannelOptions& c) {
  return {{"normalize_forces", c.normalize_forces}, {"force_scale", c.force_scale}};
}

ChannelOptions channels_of(const std::string& extra) {
  ChannelOptions c;
  const json j = json::parse(extra.empty() ? "{}" : extra, nullptr, false);
  if (j.is_object() && j.contains("channels")) {
    c.normalize_forces = j["channels"].value("normalize_forces", false);
    c.force_scale = j["channels"].value("force_scale", 100.0);
  }
  return c;
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

std::atomic<int> g_signal{0};

void on_signal(int sig) { g_signal = sig; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology optimization with SIMP and a transfer-learned CNN surrogate", "topoforge"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a SIMP dataset");
  std::vector<int> gen_dims;
  std::string gen_out, gen_shape = "full";
  GenerationConfig gcfg;
  std::vector<std::string> gen_cases;
  gen->add_option("--dims", gen_dims, "Grid as nx,ny[,nz]")->delimiter(',')->expected(2, 3)->required();
  gen->add_option("--count", gcfg.count)->capture_default_str();
  gen->add_option("--seed", gcfg.seed)->capture_default_str();
  gen->add_option("--out", gen_out, "Dataset path; the manifest goes to <out>.json")->required();
  gen->add_option("--shape", gen_shape)->capture_default_str();
  gen->add_option("--volfrac", gcfg.sampler.volfrac)->capture_default_str();
  gen->add_option("--rmin", gcfg.simp.filter_radius)->capture_default_str();
  gen->add_option("--max-iters", gcfg.simp.max_iters)->capture_default_str();
  gen->add_option("--test-fraction", gcfg.test_fraction)->capture_default_str();
  gen->add_option("--cases", gen_cases, "Boundary-condition cases to sample")->delimiter(',');
  gen->add_flag("--normalize-forces", gcfg.channels.normalize_forces, "Divide force channels by --force-scale");
  gen->add_option("--force-scale", gcfg.channels.force_scale)->capture_default_str();

  // simp
  auto* simp = app.add_subcommand("simp", "Run one SIMP optimization");
  ProblemFlags simp_problem;
  simp_problem.add(simp);
  SimpConfig scfg;
  MaterialModel material;
  std::string simp_out, simp_problem_out, simp_pgm;
  simp->add_option("--rmin", scfg.filter_radius)->capture_default_str();
  simp->add_option("--penal", material.penal)->capture_default_str();
  simp->add_option("--max-iters", scfg.max_iters)->capture_default_str();
  simp->add_option("--tol", scfg.change_tol, "Stop when max density change falls below")->capture_default_str();
  simp->add_option("--out", simp_out, "Density raster path; history goes to <out>.json")->required();
  simp->add_option("--save-problem", simp_problem_out, "Also write the problem JSON here");
  simp->add_option("--pgm", simp_pgm, "Also write a grayscale image here");

  // train-source
  auto* tsrc = app.add_subcommand("train-source", "Train a source network on a dataset");
  std::string tsrc_data, tsrc_out;
  TrainFlags tsrc_flags;
  tsrc->add_option("--data", tsrc_data)->required()->check(CLI::ExistingFile);
  tsrc->add_option("--out", tsrc_out, "Checkpoint path (.twgt)")->required();
  tsrc_flags.add(tsrc);

  // train-target
  auto* ttgt = app.add_subcommand("train-target", "Build a target network from a source and fine-tune it");
  std::string ttgt_source, ttgt_data, ttgt_out;
  bool ttgt_unfreeze = false, ttgt_scratch = false;
  TrainFlags ttgt_flags;
  ttgt->add_option("--source", ttgt_source, "Source checkpoint")->required()->check(CLI::ExistingFile);
  ttgt->add_option("--data", ttgt_data, "High-resolution dataset")->required()->check(CLI::ExistingFile);
  ttgt->add_option("--out", ttgt_out)->required();
  ttgt->add_flag("--unfreeze", ttgt_unfreeze, "Train the transferred layers as well");
  ttgt->add_flag("--scratch", ttgt_scratch, "Same architecture, random weights, everything trained");
  ttgt_flags.add(ttgt);

  // predict
  auto* pred = app.add_subcommand("predict", "Predict an optimized density field");
  std::string pred_model, pred_out, pred_pgm;
  ProblemFlags pred_problem;
  pred->add_option("--model", pred_model)->required()->check(CLI::ExistingFile);
  pred_problem.add(pred);
  pred->add_option("--out", pred_out, "Density raster path")->required();
  pred->add_option("--pgm", pred_pgm, "Also write a grayscale image here");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a prediction against ground truth, or a model on a test split");
  std::string eval_pred, eval_truth, eval_problem, eval_model, eval_data, eval_out;
  bool eval_no_compliance = false;
  eval->add_option("--pred", eval_pred)->check(CLI::ExistingFile);
  eval->add_option("--truth", eval_truth)->check(CLI::ExistingFile);
  eval->add_option("--problem", eval_problem, "Enables the compliance error")->check(CLI::ExistingFile);
  eval->add_option("--model", eval_model)->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Evaluate --model on this dataset's test split")->check(CLI::ExistingFile);
  eval->add_flag("--no-compliance", eval_no_compliance);
  eval->add_option("--out", eval_out, "Also write the report here");

  // refine
  auto* refine = app.add_subcommand("refine", "Warm-start SIMP from a predicted field");
  std::string refine_init, refine_out;
  ProblemFlags refine_problem;
  SimpConfig rcfg;
  bool refine_compare = false;
  refine_problem.add(refine);
  refine->add_option("--init", refine_init, "Initial density raster")->check(CLI::ExistingFile);
  refine->add_option("--rmin", rcfg.filter_radius)->capture_default_str();
  refine->add_option("--max-iters", rcfg.max_iters)->capture_default_str();
  refine->add_option("--out", refine_out)->required();
  refine->add_flag("--compare-cold", refine_compare, "Also run from the uniform start and report both counts");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve predictions and SIMP over HTTP");
  ServiceConfig svc;
  if (const char* dir = std::getenv("TOPOFORGE_MODEL_DIR")) svc.model_dir = dir;
  std::vector<int> cap2d{240, 120}, cap3d{40, 40, 40};
  serve->add_option("--host", svc.host)->capture_default_str();
  serve->add_option("--port", svc.port)->capture_default_str();
  serve->add_option("--model-dir", svc.model_dir, "Checkpoint directory (default $TOPOFORGE_MODEL_DIR)");
  serve->add_option("--workers", svc.simp_workers, "SIMP workers; 0 = cores - 1")->capture_default_str();
  serve->add_option("--queue", svc.queue_limit, "Queued SIMP jobs before 429")->capture_default_str();
  serve->add_option("--http-threads", svc.http_threads)->capture_default_str();
  serve->add_option("--timeout", svc.timeout_seconds, "Per-request timeout in seconds")->capture_default_str();
  serve->add_option("--simp-cap-2d", cap2d, "Largest SIMP grid nx,ny")->delimiter(',')->expected(2);
  serve->add_option("--simp-cap-3d", cap3d, "Largest SIMP grid nx,ny,nz")->delimiter(',')->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json({{"v", 1}, {"error", "usage"}, {"message", e.what()}}).dump() << '\n';
    std::cerr << app.help() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      const GridDims dims = dims_from_flag(gen_dims);
      if (!gen_cases.empty()) {
        gcfg.sampler.cases.clear();
        for (const auto& c : gen_cases) gcfg.sampler.cases.push_back(bc_case_from_string(c));
      }
      const DesignDomain domain = make_domain(dims, shaped_mask(dims, gen_shape));
      const auto t0 = Clock::now();
      const GenerationReport r = generate_dataset(std::span<const DesignDomain>(&domain, 1), gcfg, gen_out);
      emit({{"v", 1}, {"out", gen_out}, {"manifest", manifest_path(gen_out)}, {"samples", r.dataset.samples.size()},
            {"train", r.dataset.train.size()}, {"test", r.dataset.test.size()}, {"failures", r.failures},
            {"duplicates", r.duplicates}, {"config_hash", r.dataset.config_hash}, {"seed", gcfg.seed},
            {"seconds", since(t0)}});
    } else if (*simp) {
      Problem p = simp_problem.build();
      scfg.volfrac = p.volfrac;
      const json cfg = {{"cmd", "simp"}, {"problem", simp_problem.to_json()}, {"rmin", scfg.filter_radius},
                        {"penal", material.penal}, {"max_iters", scfg.max_iters}, {"tol", scfg.change_tol}};
      const auto t0 = Clock::now();
      const SimpResult r = optimize(p.domain, p.bc, material, scfg);
      const double seconds = since(t0);
      const auto raster = to_raster(p.domain, r.densities);
      const json side = {{"config_hash", hash_of(cfg)}, {"seed", 0}, {"config", cfg},
                         {"iterations", r.iterations}, {"converged", r.converged},
                         {"compliance_history", r.compliance_history}, {"volume_history", r.volume_history},
                         {"change_history", r.change_history}, {"seconds", seconds}};
      write_raster(simp_out, raster, p.domain.dims(), side.dump());
      if (!simp_problem_out.empty()) write_text_file(simp_problem_out, problem_to_json(p));
      if (!simp_pgm.empty()) write_pgm(simp_pgm, raster, p.domain.dims());
      emit({{"v", 1}, {"out", simp_out}, {"iterations", r.iterations}, {"converged", r.converged},
            {"compliance", r.compliance_history.back()}, {"seconds", seconds}, {"config_hash", hash_of(cfg)}});
    } else if (*tsrc) {
      const Dataset ds = read_dataset(tsrc_data);
      Network net = build_source(ds.dims.rank, ds.dims, {}, tsrc_flags.seed);
      const TrainHistory h = train_source(net, ds, tsrc_flags.config());
      const json cfg = {{"cmd", "train-source"}, {"dataset_hash", ds.config_hash}, {"train", tsrc_flags.to_json()}};
      const json extra = {{"v", 1}, {"config_hash", hash_of(cfg)}, {"seed", tsrc_flags.seed}, {"config", cfg},
                          {"channels", channels_json(ds.encoding)}, {"history", history_json(h)}};
      save_network(tsrc_out, net, extra.dump());
      emit({{"v", 1}, {"out", tsrc_out}, {"best_epoch", h.best_epoch}, {"best_loss", h.best_loss},
            {"epochs_run", h.epochs_run}, {"seconds", h.seconds}, {"config_hash", hash_of(cfg)}});
    } else if (*ttgt) {
      std::string source_extra;
      const Network source = load_network(ttgt_source, &source_extra);
      const Dataset ds = read_dataset(ttgt_data);
      TargetConfig tc;
      tc.freeze = ttgt_unfreeze || ttgt_scratch ? FreezePolicy::Unfrozen : FreezePolicy::Frozen;
      tc.seed = ttgt_flags.seed;
      Network target = build_target(source, ds.dims, tc);
      if (ttgt_scratch) {
        const Network fresh = build_target(build_source(source.spec.rank, source.spec.output_dims, source.spec.plan,
                                                        ttgt_flags.seed + 1),
                                           ds.dims, tc);
        target = fresh;
        target.spec.transferred = 0;
        target.spec.transferred_hash.clear();
      }
      const TrainHistory h = fine_tune(target, ds, ttgt_flags.config());
      const json cfg = {{"cmd", "train-target"}, {"source_hash", sha256_hex(read_file(ttgt_source))},
                        {"dataset_hash", ds.config_hash}, {"unfreeze", ttgt_unfreeze}, {"scratch", ttgt_scratch},
                        {"train", ttgt_flags.to_json()}};
      const json extra = {{"v", 1}, {"config_hash", hash_of(cfg)}, {"seed", ttgt_flags.seed}, {"config", cfg},
                          {"channels", channels_json(ds.encoding)}, {"history", history_json(h)}};
      save_network(ttgt_out, target, extra.dump());
      emit({{"v", 1}, {"out", ttgt_out}, {"best_epoch", h.best_epoch}, {"best_loss", h.best_loss},
            {"epochs_run", h.epochs_run}, {"seconds", h.seconds}, {"config_hash", hash_of(cfg)}});
    } else if (*pred) {
      std::string extra;
      const Network net = load_network(pred_model, &extra);
      const Problem p = pred_problem.build();
      const auto t0 = Clock::now();
      const Prediction r = predict(net, p.domain, p.bc, p.volfrac, channels_of(extra));
      const double seconds = since(t0);
      const json cfg = {{"cmd", "predict"}, {"model_hash", sha256_hex(read_file(pred_model))},
                        {"problem", pred_problem.to_json()}};
      write_raster(pred_out, r.densities, p.domain.dims(),
                   json({{"config_hash", hash_of(cfg)}, {"seed", 0}, {"config", cfg}, {"seconds", seconds}}).dump());
      if (!pred_pgm.empty()) write_pgm(pred_pgm, r.densities, p.domain.dims());
      emit({{"v", 1}, {"out", pred_out}, {"seconds", seconds}, {"config_hash", hash_of(cfg)}});
    } else if (*eval) {
      json report;
      if (!eval_model.empty() || !eval_data.empty()) {
        if (eval_model.empty() || eval_data.empty()) fail(ErrorCode::InvalidArgument, "--model and --data go together");
        const Network net = load_network(eval_model);
        const Dataset ds = read_dataset(eval_data);
        report = json::parse(evaluate_network(net, ds, {}, !eval_no_compliance).to_json());
      } else {
        if (eval_pred.empty() || eval_truth.empty()) fail(ErrorCode::InvalidArgument, "give --pred and --truth");
        const Raster pr = read_raster(eval_pred);
        const Raster tr = read_raster(eval_truth);
        if (!(pr.dims == tr.dims)) fail(ErrorCode::DimensionMismatch, "prediction and truth grids differ");
        std::vector<std::uint8_t> mask;
        report = {{"v", 1}, {"compliance_error", nullptr}, {"disconnected", false}};
        if (!eval_problem.empty()) {
          const auto bytes = read_file(eval_problem);
          const Problem p = problem_from_json(std::string(bytes.begin(), bytes.end()));
          if (!(p.domain.dims() == pr.dims)) fail(ErrorCode::DimensionMismatch, "problem grid differs from the rasters");
          mask = p.domain.mask();
          if (!eval_no_compliance) {
            try {
              report["compliance_error"] = compliance_error(pr.values, tr.values, p.domain, p.bc);
            } catch (const Error& e) {
              if (e.code() != ErrorCode::DisconnectedPrediction) throw;
              report["disconnected"] = true;
            }
          }
        }
        report["mse"] = mse_metric(pr.values, tr.values, mask);
        report["ba"] = binary_accuracy(pr.values, tr.values, mask);
      }
      if (!eval_out.empty()) write_text_file(eval_out, report.dump(2));
      emit(report);
    } else if (*refine) {
      const Problem p = refine_problem.build();
      rcfg.volfrac = p.volfrac;
      std::optional<std::vector<double>> init;
      if (!refine_init.empty()) {
        const Raster r = read_raster(refine_init);
        if (!(r.dims == p.domain.dims())) fail(ErrorCode::DimensionMismatch, "--init grid differs from the problem");
        init = from_raster(p.domain, r.values);
      }
      const json cfg = {{"cmd", "refine"}, {"problem", refine_problem.to_json()},
                        {"init_hash", refine_init.empty() ? "" : sha256_hex(read_file(refine_init))},
                        {"rmin", rcfg.filter_radius}, {"max_iters", rcfg.max_iters}};
      const auto t0 = Clock::now();
      const SimpResult r = init ? optimize(p.domain, p.bc, MaterialModel{}, rcfg, std::span<const double>(*init))
                                : optimize(p.domain, p.bc, MaterialModel{}, rcfg);
      const double seconds = since(t0);
      json out = {{"v", 1}, {"out", refine_out}, {"iterations", r.iterations}, {"converged", r.converged},
                  {"compliance", r.compliance_history.back()}, {"seconds", seconds}, {"config_hash", hash_of(cfg)}};
      if (refine_compare) {
        const SimpResult cold = optimize(p.domain, p.bc, MaterialModel{}, rcfg);
        out["cold_iterations"] = cold.iterations;
        out["cold_compliance"] = cold.compliance_history.back();
      }
      write_raster(refine_out, to_raster(p.domain, r.densities), p.domain.dims(),
                   json({{"config_hash", hash_of(cfg)}, {"seed", 0}, {"config", cfg}, {"iterations", r.iterations},
                         {"compliance_history", r.compliance_history}})
                       .dump());
      emit(out);
    } else if (*serve) {
      svc.simp_cap_2d = dims_from_flag(cap2d);
      svc.simp_cap_3d = dims_from_flag(cap3d);
      Service service(svc);
      if (!svc.model_dir.empty()) service.reload_models();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::signal(SIGHUP, on_signal);
      service.start();
      for (;;) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        const int sig = g_signal.exchange(0);
        if (sig == SIGHUP) {
          try {
            service.reload_models();
          } catch (const Error& e) {
            std::cerr << json({{"v", 1}, {"event", "reload_failed"}, {"message", e.what()}}).dump() << '\n';
          }
        } else if (sig != 0) {
          break;
        }
      }
      service.stop();
    }
  } catch (const Error& e) {
    std::cerr << json({{"v", 1}, {"error", to_string(e.code())}, {"message", e.what()}}).dump() << '\n';
    // Bad flag values surface as InvalidArgument and count as usage errors.
    return e.code() == ErrorCode::InvalidArgument ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << json({{"v", 1}, {"error", "Internal"}, {"message", e.what()}}).dump() << '\n';
    return 1;
  }
  return 0;
}
