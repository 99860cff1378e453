#include "topoforge/eval_metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>

#include <json.hpp>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"
#include "topoforge/datagen.hpp"
#include "topoforge/fea.hpp"
#include "topoforge/networks.hpp"
#include "topoforge/simp.hpp"

namespace topoforge {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::span<const std::uint8_t> mask) {
  if (a != b || (!mask.empty() && mask.size() != a)) {
    fail(ErrorCode::DimensionMismatch, "fields and mask must have equal sizes");
  }
  if (a == 0) fail(ErrorCode::DimensionMismatch, "fields are empty");
}

bool counts(std::span<const std::uint8_t> mask, std::size_t e) { return mask.empty() || mask[e] != 0; }

bool solid(double v) { return v >= 0.5; }

}  // namespace

double mse_metric(std::span<const double> pred, std::span<const double> truth, std::span<const std::uint8_t> mask) {
  check_sizes(pred.size(), truth.size(), mask);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t e = 0; e < pred.size(); ++e) {
    if (!counts(mask, e)) continue;
    acc += (pred[e] - truth[e]) * (pred[e] - truth[e]);
    ++n;
  }
  if (n == 0) fail(ErrorCode::DimensionMismatch, "mask selects no element");
  return acc / static_cast<double>(n);
}

double binary_accuracy(std::span<const double> pred, std::span<const double> truth,
                       std::span<const std::uint8_t> mask) {
  check_sizes(pred.size(), truth.size(), mask);
  std::size_t agree = 0, n = 0;
  for (std::size_t e = 0; e < pred.size(); ++e) {
    if (!counts(mask, e)) continue;
    agree += solid(pred[e]) == solid(truth[e]);
    ++n;
  }
  if (n == 0) fail(ErrorCode::DimensionMismatch, "mask selects no element");
  return static_cast<double>(agree) / static_cast<double>(n);
}

std::vector<std::uint8_t> symmetric_difference(std::span<const double> a, std::span<const double> b,
                                               std::span<const std::uint8_t> mask) {
  check_sizes(a.size(), b.size(), mask);
  std::vector<std::uint8_t> out(a.size(), 0);
  for (std::size_t e = 0; e < a.size(); ++e) out[e] = counts(mask, e) && solid(a[e]) != solid(b[e]);
  return out;
}

bool load_path_connected(const DesignDomain& domain, const BoundaryConditions& bc, std::span<const double> raster) {
  if (raster.size() != domain.element_count()) fail(ErrorCode::DimensionMismatch, "raster size");
  // Union of solid elements through shared nodes, searched from the supports.
  std::vector<std::vector<std::size_t>> node_elems(domain.node_count());
  const int corners = domain.dims().nodes_per_element();
  for (std::size_t e : domain.active_elements()) {
    if (!solid(raster[e])) continue;
    const auto nodes = domain.element_nodes(e);
    for (int c = 0; c < corners; ++c) node_elems[nodes[static_cast<std::size_t>(c)]].push_back(e);
  }
  std::vector<std::uint8_t> reached(domain.node_count(), 0);
  std::vector<std::uint8_t> seen(domain.element_count(), 0);
  std::queue<std::size_t> q;
  for (const FixedDof& f : bc.fixed) {
    if (!reached[f.node] && !node_elems[f.node].empty()) {
      reached[f.node] = 1;
      q.push(f.node);
    }
  }
  while (!q.empty()) {
    const std::size_t n = q.front();
    q.pop();
    for (std::size_t e : node_elems[n]) {
      if (seen[e]) continue;
      seen[e] = 1;
      const auto nodes = domain.element_nodes(e);
      for (int c = 0; c < corners; ++c) {
        const std::size_t m = nodes[static_cast<std::size_t>(c)];
        if (!reached[m]) {
          reached[m] = 1;
          q.push(m);
        }
      }
    }
  }
  return std::all_of(bc.loads.begin(), bc.loads.end(), [&](const PointLoad& l) { return reached[l.node] != 0; });
}

double thresholded_compliance(const DesignDomain& domain, const BoundaryConditions& bc,
                              std::span<const double> raster, const MaterialModel& material) {
  if (raster.size() != domain.element_count()) fail(ErrorCode::DimensionMismatch, "raster size");
  std::vector<double> binary(raster.size());
  for (std::size_t e = 0; e < raster.size(); ++e) binary[e] = solid(raster[e]) ? 1.0 : 0.0;
  return solve(domain, bc, from_raster(domain, binary), material).compliance;
}

double compliance_error(std::span<const double> pred, std::span<const double> truth, const DesignDomain& domain,
                        const BoundaryConditions& bc, const MaterialModel& material) {
  check_sizes(pred.size(), truth.size(), {});
  if (!load_path_connected(domain, bc, truth)) {
    fail(ErrorCode::DisconnectedPrediction, "thresholded ground truth has no load path");
  }
  if (!load_path_connected(domain, bc, pred)) {
    fail(ErrorCode::DisconnectedPrediction, "thresholded prediction disconnects the load from the supports");
  }
  double c_pred = 0.0, c_truth = 0.0;
  try {
    c_truth = thresholded_compliance(domain, bc, truth, material);
    c_pred = thresholded_compliance(domain, bc, pred, material);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularSystem) throw;
    fail(ErrorCode::DisconnectedPrediction, e.what());
  }
  return (c_pred - c_truth) / c_truth;
}

EvalReport aggregate(std::vector<SampleScore> samples) {
  EvalReport r;
  r.samples = std::move(samples);
  if (r.samples.empty()) return r;
  const double n = static_cast<double>(r.samples.size());
  double ce_sum = 0.0;
  for (const SampleScore& s : r.samples) {
    r.mse += s.mse;
    r.ba += s.ba;
    r.mean_seconds += s.seconds;
    r.max_seconds = std::max(r.max_seconds, s.seconds);
    r.disconnected += s.disconnected;
    if (s.compliance_error) {
      ce_sum += *s.compliance_error;
      ++r.compliance_count;
    }
  }
  r.mse /= n;
  r.ba /= n;
  r.mean_seconds /= n;
  if (r.compliance_count > 0) {
    r.compliance_error = ce_sum / static_cast<double>(r.compliance_count);
    double var = 0.0;
    for (const SampleScore& s : r.samples) {
      if (s.compliance_error) var += std::pow(*s.compliance_error - r.compliance_error, 2);
    }
    r.compliance_error_std = std::sqrt(var / static_cast<double>(r.compliance_count));
  }
  return r;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  json per = json::array();
  for (const SampleScore& s : samples) {
    per.push_back({{"mse", s.mse},
                   {"ba", s.ba},
                   {"compliance_error", s.compliance_error ? json(*s.compliance_error) : json(nullptr)},
                   {"disconnected", s.disconnected},
                   {"seconds", s.seconds}});
  }
  const json j = {{"v", 1},
                  {"count", samples.size()},
                  {"mse", mse},
                  {"ba", ba},
                  {"compliance_error", compliance_count > 0 ? json(compliance_error) : json(nullptr)},
                  {"compliance_error_std", compliance_count > 0 ? json(compliance_error_std) : json(nullptr)},
                  {"compliance_count", compliance_count},
                  {"disconnected", disconnected},
                  {"disconnected_rate", samples.empty() ? 0.0 : static_cast<double>(disconnected) / samples.size()},
                  {"mean_seconds", mean_seconds},
                  {"max_seconds", max_seconds},
                  {"samples", per}};
  return j.dump(2);
}

void write_pgm(const std::string& path, std::span<const double> raster, const GridDims& dims) {
  if (raster.size() != dims.element_count()) fail(ErrorCode::DimensionMismatch, "raster size");
  const int slices = dims.rank == 3 ? dims.nz : 1;
  std::string out = "P5\n" + std::to_string(dims.nx) + " " + std::to_string(dims.ny * slices) + "\n255\n";
  for (int k = 0; k < slices; ++k) {
    for (int j = dims.ny - 1; j >= 0; --j) {
      for (int i = 0; i < dims.nx; ++i) {
        const double v = std::clamp(raster[static_cast<std::size_t>(i) +
                                           static_cast<std::size_t>(dims.nx) *
                                               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.ny) * k)],
                                    0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)))));
      }
    }
  }
  write_text_file(path, out);
}

EvalReport evaluate_network(const Network& network, const Dataset& dataset, std::span<const std::size_t> indices,
                            bool with_compliance) {
  const std::span<const std::size_t> chosen = indices.empty() ? std::span<const std::size_t>(dataset.test) : indices;
  if (chosen.empty()) fail(ErrorCode::InvalidArgument, "no samples to evaluate");
  std::vector<SampleScore> scores;
  for (std::size_t i : chosen) {
    if (i >= dataset.samples.size()) fail(ErrorCode::InvalidArgument, "sample index out of range");
    const Sample& s = dataset.samples[i];
    const DesignDomain domain = sample_domain(dataset, s);
    const BoundaryConditions bc = sample_conditions(domain, s);
    const auto t0 = std::chrono::steady_clock::now();
    const Prediction p = predict(network, domain, bc, s.meta.volfrac, dataset.encoding);
    SampleScore score;
    score.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::vector<double> truth(s.target.begin(), s.target.end());
    score.mse = mse_metric(p.densities, truth, domain.mask());
    score.ba = binary_accuracy(p.densities, truth, domain.mask());
    if (with_compliance) {
      try {
        score.compliance_error = compliance_error(p.densities, truth, domain, bc);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DisconnectedPrediction) throw;
        score.disconnected = true;
      }
    }
    scores.push_back(score);
  }
  return aggregate(std::move(scores));
}

}  // namespace topoforge
