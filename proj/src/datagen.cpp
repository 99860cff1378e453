#include "topoforge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"

namespace topoforge {

using nlohmann::json;

void SamplerConfig::validate() const {
  if (!(force_max > force_min)) fail(ErrorCode::InvalidArgument, "force range is degenerate");
  if (std::abs(force_max + force_min) > 1e-12 * force_max) {
    fail(ErrorCode::InvalidArgument, "force range must be symmetric about zero");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(region_lo[a] >= 0.0 && region_hi[a] <= 1.0 && region_lo[a] <= region_hi[a])) {
      fail(ErrorCode::InvalidArgument, "load-region fractions must satisfy 0 <= lo <= hi <= 1");
    }
  }
  if (cases.empty()) fail(ErrorCode::InvalidArgument, "no boundary-condition cases allowed");
  if (!(volfrac > 0.0 && volfrac < 1.0)) fail(ErrorCode::InvalidArgument, "volfrac must lie in (0, 1)");
}

std::vector<std::size_t> admissible_load_nodes(const DesignDomain& domain,
                                               const SamplerConfig& config, BcCase c) {
  const GridDims& d = domain.dims();
  const auto supports = standard_supports(domain, c);
  std::set<std::size_t> supported;
  for (const FixedDof& f : supports) supported.insert(f.node);
  const std::array<int, 3> extent{d.nx, d.ny, d.nz};
  std::vector<std::size_t> nodes;
  for (std::size_t n = 0; n < domain.node_count(); ++n) {
    if (!domain.node_on_boundary(n) || supported.count(n)) continue;
    const NodeCoord nc = domain.node_coord(n);
    const std::array<int, 3> ijk{nc.i, nc.j, nc.k};
    bool inside = true;
    for (int a = 0; a < d.rank && inside; ++a) {
      // Compare in integer node units to avoid rounding at the region edges.
      const double lo = config.region_lo[a] * extent[a];
      const double hi = config.region_hi[a] * extent[a];
      inside = ijk[a] >= lo - 1e-9 && ijk[a] <= hi + 1e-9;
    }
    if (inside) nodes.push_back(n);
  }
  return nodes;
}

SampledProblem sample_problem(const DesignDomain& domain, const SamplerConfig& config,
                              std::mt19937_64& rng) {
  config.validate();
  std::uniform_int_distribution<std::size_t> pick_case(0, config.cases.size() - 1);
  const BcCase c = config.cases[pick_case(rng)];
  const auto nodes = admissible_load_nodes(domain, config, c);
  if (nodes.empty()) {
    fail(ErrorCode::EmptyAdmissibleRegion,
         "no boundary node inside the load region for case " + std::string(to_string(c)));
  }
  std::uniform_int_distribution<std::size_t> pick_node(0, nodes.size() - 1);
  std::uniform_real_distribution<double> force(config.force_min, config.force_max);
  PointLoad load;
  load.node = nodes[pick_node(rng)];
  for (int a = 0; a < domain.rank(); ++a) load.force[static_cast<std::size_t>(a)] = force(rng);
  return {c, standard_bc_case(domain, c, load), config.volfrac};
}

std::vector<std::size_t> spatial_shape(const GridDims& dims) {
  if (dims.rank == 3) {
    return {static_cast<std::size_t>(dims.nz), static_cast<std::size_t>(dims.ny),
            static_cast<std::size_t>(dims.nx)};
  }
  return {static_cast<std::size_t>(dims.ny), static_cast<std::size_t>(dims.nx)};
}

nn::Tensor encode_channels(const DesignDomain& domain, const BoundaryConditions& bc,
                           double volfrac, const ChannelOptions& options) {
  const GridDims& d = domain.dims();
  const int rank = d.rank;
  const std::size_t cells = d.element_count();
  std::vector<std::size_t> shape{static_cast<std::size_t>(channel_count(rank))};
  for (std::size_t s : spatial_shape(d)) shape.push_back(s);
  nn::Tensor t(shape, 0.0);
  double* data = t.data();
  for (std::size_t e = 0; e < cells; ++e) data[e] = domain.is_active(e) ? volfrac : 0.0;

  const auto cell_of = [&](std::size_t node) {
    const NodeCoord c = domain.node_coord(node);
    if (c.i > d.nx || c.j > d.ny || c.k > (rank == 3 ? d.nz : 0)) {
      fail(ErrorCode::DimensionMismatch, "node outside the grid");
    }
    return domain.element_index(std::min(c.i, d.nx - 1), std::min(c.j, d.ny - 1),
                                std::min(c.k, d.nz - 1));
  };
  for (const FixedDof& f : bc.fixed) {
    if (f.node >= domain.node_count() || f.axis < 0 || f.axis >= rank) {
      fail(ErrorCode::DimensionMismatch, "support outside the grid");
    }
    data[static_cast<std::size_t>(1 + f.axis) * cells + cell_of(f.node)] = 1.0;
  }
  const double scale = options.normalize_forces ? 1.0 / options.force_scale : 1.0;
  for (const PointLoad& l : bc.loads) {
    if (l.node >= domain.node_count()) fail(ErrorCode::DimensionMismatch, "load outside the grid");
    const std::size_t cell = cell_of(l.node);
    for (int a = 0; a < rank; ++a) {
      data[static_cast<std::size_t>(1 + rank + a) * cells + cell] += scale * l.force[static_cast<std::size_t>(a)];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Dataset container

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
  if (dataset.samples.empty()) fail(ErrorCode::InvalidArgument, "dataset has no samples");
  const std::size_t cells = dataset.dims.element_count();
  const std::size_t in_size = cells * static_cast<std::size_t>(dataset.channels);
  ByteWriter w;
  w.text("TOPO");
  w.u32(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(dataset.dims.rank));
  w.u32(static_cast<std::uint32_t>(dataset.dims.ny));
  w.u32(static_cast<std::uint32_t>(dataset.dims.nx));
  if (dataset.dims.rank == 3) w.u32(static_cast<std::uint32_t>(dataset.dims.nz));
  w.u32(static_cast<std::uint32_t>(dataset.channels));
  w.u64(dataset.samples.size());
  w.bytes().reserve(w.bytes().size() + dataset.samples.size() * (in_size + cells) * 4);
  for (const Sample& s : dataset.samples) {
    if (s.input.size() != in_size || s.target.size() != cells) {
      fail(ErrorCode::DimensionMismatch, "sample tensor sizes do not match the dataset header");
    }
    for (float v : s.input) w.f32(v);
    for (float v : s.target) w.f32(v);
  }
  return std::move(w.bytes());
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(4) != "TOPO") fail(ErrorCode::FormatError, "not a TOPO dataset file");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    fail(ErrorCode::FormatError, "unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  const int rank = r.u8();
  if (rank != 2 && rank != 3) fail(ErrorCode::FormatError, "invalid spatial rank");
  const int ny = static_cast<int>(r.u32());
  const int nx = static_cast<int>(r.u32());
  const int nz = rank == 3 ? static_cast<int>(r.u32()) : 1;
  ds.dims = rank == 3 ? GridDims::volume(nx, ny, nz) : GridDims::plane(nx, ny);
  ds.channels = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  if (count == 0) fail(ErrorCode::FormatError, "dataset has no samples");
  const std::size_t cells = ds.dims.element_count();
  const std::size_t in_size = cells * static_cast<std::size_t>(ds.channels);
  if (r.remaining() != count * (in_size + cells) * 4) {
    fail(ErrorCode::FormatError, "payload size does not match the header");
  }
  ds.samples.resize(count);
  for (Sample& s : ds.samples) {
    s.input.resize(in_size);
    s.target.resize(cells);
    for (float& v : s.input) v = r.f32();
    for (float& v : s.target) v = r.f32();
  }
  return ds;
}

std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".json"; }

void write_dataset(const std::string& path, const Dataset& dataset, const std::string& manifest_json) {
  write_file(path, serialize_dataset(dataset));
  if (!manifest_json.empty()) write_text_file(manifest_path(path), manifest_json);
}

Dataset read_dataset(const std::string& path) {
  Dataset ds = deserialize_dataset(read_file(path));
  const std::string mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) return ds;
  const auto raw = read_file(mpath);
  const json m = json::parse(raw.begin(), raw.end());
  ds.config_hash = m.value("config_hash", "");
  if (m.contains("config")) {
    ds.encoding.normalize_forces = m["config"].value("normalize_forces", false);
    ds.encoding.force_scale = m["config"].value("force_scale", 100.0);
  }
  if (m.contains("split")) {
    ds.train = m["split"]["train"].get<std::vector<std::size_t>>();
    ds.test = m["split"]["test"].get<std::vector<std::size_t>>();
  }
  if (m.contains("samples") && m["samples"].size() == ds.samples.size()) {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const json& j = m["samples"][i];
      SampleMeta& meta = ds.samples[i].meta;
      meta.seed = j.at("seed").get<std::uint64_t>();
      meta.domain_index = j.at("domain_index").get<std::size_t>();
      meta.bc_case = bc_case_from_string(j.at("case").get<std::string>());
      meta.load_node = j.at("load_node").get<std::size_t>();
      meta.force = j.at("force").get<std::array<double, 3>>();
      meta.volfrac = j.at("volfrac").get<double>();
      meta.simp_iterations = j.at("iterations").get<int>();
      meta.simp_converged = j.at("converged").get<bool>();
      meta.compliance = j.at("compliance").get<double>();
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Generation

std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index) {
  // splitmix64 finaliser keeps neighbouring indices decorrelated.
  std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

DesignDomain sample_domain(const Dataset& dataset, const Sample& sample) {
  const std::size_t cells = dataset.dims.element_count();
  if (sample.input.size() < cells) fail(ErrorCode::DimensionMismatch, "sample does not match the dataset dims");
  std::vector<std::uint8_t> mask(cells);
  for (std::size_t e = 0; e < cells; ++e) mask[e] = sample.input[e] > 0.0f;
  return make_domain(dataset.dims, std::move(mask));
}

BoundaryConditions sample_conditions(const DesignDomain& domain, const Sample& sample) {
  return standard_bc_case(domain, sample.meta.bc_case, {sample.meta.load_node, sample.meta.force});
}

Sample mirror_sample(const Dataset& dataset, const Sample& sample, std::array<bool, 3> flip) {
  const GridDims& d = dataset.dims;
  const std::size_t cells = d.element_count();
  if (sample.input.size() != cells * static_cast<std::size_t>(dataset.channels) || sample.target.size() != cells) {
    fail(ErrorCode::DimensionMismatch, "sample does not match the dataset dims");
  }
  if (d.rank == 2) flip[2] = false;
  const auto mirror_element = [&](std::size_t e) {
    int i = static_cast<int>(e % static_cast<std::size_t>(d.nx));
    int j = static_cast<int>((e / static_cast<std::size_t>(d.nx)) % static_cast<std::size_t>(d.ny));
    int k = static_cast<int>(e / (static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny)));
    if (flip[0]) i = d.nx - 1 - i;
    if (flip[1]) j = d.ny - 1 - j;
    if (flip[2]) k = d.nz - 1 - k;
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(d.nx) * (static_cast<std::size_t>(j) +
                                          static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(k));
  };

  const DesignDomain domain = sample_domain(dataset, sample);
  std::vector<std::uint8_t> mirrored_mask(cells);
  for (std::size_t e = 0; e < cells; ++e) mirrored_mask[mirror_element(e)] = domain.mask()[e];
  const DesignDomain mirrored = make_domain(d, std::move(mirrored_mask));

  const auto mirror_node = [&](std::size_t node) {
    NodeCoord c = domain.node_coord(node);
    if (flip[0]) c.i = d.nx - c.i;
    if (flip[1]) c.j = d.ny - c.j;
    if (flip[2]) c.k = d.nz - c.k;
    return mirrored.node_index(c.i, c.j, c.k);
  };
  std::vector<FixedDof> fixed;
  for (const FixedDof& f : standard_supports(domain, sample.meta.bc_case)) fixed.push_back({mirror_node(f.node), f.axis});
  PointLoad load{mirror_node(sample.meta.load_node), sample.meta.force};
  for (int a = 0; a < d.rank; ++a) {
    if (flip[static_cast<std::size_t>(a)]) load.force[static_cast<std::size_t>(a)] = -load.force[static_cast<std::size_t>(a)];
  }
  const BoundaryConditions bc = make_boundary_conditions(mirrored, std::move(fixed), {load});

  Sample out;
  const nn::Tensor input = encode_channels(mirrored, bc, sample.meta.volfrac, dataset.encoding);
  out.input.assign(input.values().begin(), input.values().end());
  out.target.resize(cells);
  for (std::size_t e = 0; e < cells; ++e) out.target[mirror_element(e)] = sample.target[e];
  out.meta = sample.meta;
  return out;
}

std::vector<std::array<bool, 3>> mirror_flips(std::span<const int> axes, int rank) {
  std::vector<int> unique;
  for (int a : axes) {
    if (a < 0 || a >= rank) fail(ErrorCode::InvalidArgument, "mirror axis out of range");
    if (std::find(unique.begin(), unique.end(), a) == unique.end()) unique.push_back(a);
  }
  std::vector<std::array<bool, 3>> flips;
  for (std::size_t m = 1; m < (std::size_t{1} << unique.size()); ++m) {
    std::array<bool, 3> flip{false, false, false};
    for (std::size_t b = 0; b < unique.size(); ++b) flip[static_cast<std::size_t>(unique[b])] = (m >> b & 1u) != 0;
    flips.push_back(flip);
  }
  return flips;
}

void split_indices(std::size_t n, double test_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "test fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
}

namespace {

json config_json(const GenerationConfig& c, const GridDims& dims, std::size_t domain_count) {
  json cases = json::array();
  for (BcCase b : c.sampler.cases) cases.push_back(std::string(to_string(b)));
  return {
      {"count", c.count},
      {"seed", c.seed},
      {"dims", dims.rank == 3 ? json::array({dims.ny, dims.nx, dims.nz}) : json::array({dims.ny, dims.nx})},
      {"domains", domain_count},
      {"sampler",
       {{"force_range", {c.sampler.force_min, c.sampler.force_max}},
        {"region_lo", c.sampler.region_lo},
        {"region_hi", c.sampler.region_hi},
        {"cases", cases},
        {"volfrac", c.sampler.volfrac}}},
      {"simp",
       {{"volfrac", c.simp.volfrac},
        {"filter_radius", c.simp.filter_radius},
        {"max_iters", c.simp.max_iters},
        {"move_limit", c.simp.move_limit},
        {"change_tol", c.simp.change_tol},
        {"oc_damping", c.simp.oc_damping}}},
      {"material",
       {{"e0", c.material.e0}, {"e_min", c.material.e_min}, {"penal", c.material.penal},
        {"poisson", c.material.poisson}}},
      {"normalize_forces", c.channels.normalize_forces},
      {"force_scale", c.channels.force_scale},
      {"test_fraction", c.test_fraction},
  };
}

}  // namespace

GenerationReport generate_dataset(std::span<const DesignDomain> domains,
                                  const GenerationConfig& config, const std::string& out_path) {
  if (domains.empty()) fail(ErrorCode::InvalidArgument, "no domains given");
  if (config.count < 1) fail(ErrorCode::InvalidArgument, "sample count must be >= 1");
  config.sampler.validate();
  const GridDims dims = domains.front().dims();
  for (const DesignDomain& d : domains) {
    if (!(d.dims() == dims)) fail(ErrorCode::DimensionMismatch, "domains must share dims");
  }

  GenerationReport report;
  Dataset& ds = report.dataset;
  ds.dims = dims;
  ds.channels = channel_count(dims.rank);

  const bool explicit_seeds = !config.seeds.empty();
  const std::size_t max_attempts = explicit_seeds ? config.seeds.size() : 2 * config.count + 16;
  using Key = std::tuple<std::size_t, int, std::size_t, long long, long long, long long>;
  std::set<Key> seen;
  SimpConfig simp = config.simp;
  simp.volfrac = config.sampler.volfrac;

  for (std::size_t attempt = 0; attempt < max_attempts && ds.samples.size() < config.count; ++attempt) {
    ++report.attempts;
    const std::uint64_t seed = explicit_seeds ? config.seeds[attempt] : sample_seed(config.seed, attempt);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_domain(0, domains.size() - 1);
    const std::size_t di = pick_domain(rng);
    const DesignDomain& domain = domains[di];
    try {
      const SampledProblem p = sample_problem(domain, config.sampler, rng);
      const PointLoad& load = p.bc.loads.front();
      const auto q = [](double f) { return std::llround(f * 1000.0); };
      const Key key{di, static_cast<int>(p.bc_case), load.node, q(load.force[0]), q(load.force[1]),
                    q(load.force[2])};
      if (!seen.insert(key).second) {
        ++report.duplicates;
        report.log.push_back("seed " + std::to_string(seed) + ": duplicate problem skipped");
        continue;
      }
      const SimpResult r = optimize(domain, p.bc, config.material, simp);
      const nn::Tensor input = encode_channels(domain, p.bc, p.volfrac, config.channels);
      Sample s;
      s.input.assign(input.values().begin(), input.values().end());
      const auto raster = to_raster(domain, r.densities);
      s.target.assign(raster.begin(), raster.end());
      s.meta = {seed, di, p.bc_case, load.node, load.force, p.volfrac, r.iterations, r.converged,
                r.compliance_history.empty() ? 0.0 : r.compliance_history.back()};
      if (!r.converged) {
        report.log.push_back("seed " + std::to_string(seed) + ": SIMP stopped at the iteration cap");
      }
      ds.samples.push_back(std::move(s));
    } catch (const Error& e) {
      ++report.failures;
      report.log.push_back("seed " + std::to_string(seed) + ": " + e.what());
      std::clog << "generate_dataset: seed " << seed << " failed: " << e.what() << '\n';
    }
    if (static_cast<double>(report.failures) >
        config.max_failure_rate * static_cast<double>(std::max<std::size_t>(config.count, report.attempts))) {
      fail(ErrorCode::NonConvergence, "more than " + std::to_string(config.max_failure_rate * 100) +
                                          "% of samples failed");
    }
  }
  if (ds.samples.empty()) fail(ErrorCode::InvalidArgument, "no sample could be generated");

  split_indices(ds.samples.size(), config.test_fraction, config.seed, ds.train, ds.test);
  const json cfg = config_json(config, dims, domains.size());
  ds.config_hash = sha256_hex(cfg.dump());
  ds.encoding = config.channels;

  json samples = json::array();
  std::vector<std::uint64_t> seeds;
  for (const Sample& s : ds.samples) {
    seeds.push_back(s.meta.seed);
    samples.push_back({{"seed", s.meta.seed},
                       {"domain_index", s.meta.domain_index},
                       {"case", std::string(to_string(s.meta.bc_case))},
                       {"load_node", s.meta.load_node},
                       {"force", s.meta.force},
                       {"volfrac", s.meta.volfrac},
                       {"iterations", s.meta.simp_iterations},
                       {"converged", s.meta.simp_converged},
                       {"compliance", s.meta.compliance}});
  }
  const json manifest = {{"v", 1},
                         {"format", "TOPO"},
                         {"version", kDatasetVersion},
                         {"dims", cfg["dims"]},
                         {"channels", ds.channels},
                         {"count", ds.samples.size()},
                         {"seed", config.seed},
                         {"config_hash", ds.config_hash},
                         {"config", cfg},
                         {"seeds", seeds},
                         {"split", {{"train", ds.train}, {"test", ds.test}}},
                         {"samples", samples},
                         {"attempts", report.attempts},
                         {"failures", report.failures},
                         {"duplicates", report.duplicates},
                         {"log", report.log}};
  report.manifest_json = manifest.dump(2);
  if (!out_path.empty()) write_dataset(out_path, ds, report.manifest_json);
  return report;
}

// ---------------------------------------------------------------------------
// Rescaling

namespace {

struct Tap {
  std::size_t index;
  double weight;
};

// Per-output-cell input taps along one axis.
std::vector<std::vector<Tap>> axis_taps(int from, int to, RescaleMode mode) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(to));
  if (from == to) {
    for (int o = 0; o < to; ++o) taps[static_cast<std::size_t>(o)] = {{static_cast<std::size_t>(o), 1.0}};
    return taps;
  }
  const double ratio = static_cast<double>(from) / to;
  if (to < from) {
    for (int o = 0; o < to; ++o) {
      const double lo = o * ratio;
      const double hi = (o + 1) * ratio;
      for (int i = static_cast<int>(std::floor(lo)); i < std::min(from, static_cast<int>(std::ceil(hi))); ++i) {
        const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (overlap <= 1e-12) continue;
        double w = overlap / ratio;
        if (mode == RescaleMode::Sum) w *= ratio;
        taps[static_cast<std::size_t>(o)].push_back({static_cast<std::size_t>(i), w});
      }
    }
  } else {
    for (int o = 0; o < to; ++o) {
      const double pos = std::clamp((o + 0.5) * ratio - 0.5, 0.0, static_cast<double>(from - 1));
      const int i0 = std::min(static_cast<int>(std::floor(pos)), from - 1);
      const int i1 = std::min(i0 + 1, from - 1);
      const double t = pos - i0;
      const double scale = mode == RescaleMode::Sum ? ratio : 1.0;
      auto& v = taps[static_cast<std::size_t>(o)];
      v.push_back({static_cast<std::size_t>(i0), (1.0 - t) * scale});
      if (i1 != i0 && t > 0.0) v.push_back({static_cast<std::size_t>(i1), t * scale});
    }
  }
  return taps;
}

// Applies taps along `axis` of a [n2][n1][n0] array (axis 0 fastest).
std::vector<double> resample_axis(const std::vector<double>& in, std::array<int, 3> shape, int axis,
                                  int to, RescaleMode mode) {
  const auto taps = axis_taps(shape[axis], to, mode);
  std::array<int, 3> out_shape = shape;
  out_shape[axis] = to;
  std::vector<double> out(static_cast<std::size_t>(out_shape[0]) * out_shape[1] * out_shape[2]);
  const bool take_max = mode == RescaleMode::Max && to < shape[axis];
  for (int c = 0; c < out_shape[2]; ++c) {
    for (int b = 0; b < out_shape[1]; ++b) {
      for (int a = 0; a < out_shape[0]; ++a) {
        std::array<int, 3> idx{a, b, c};
        double acc = take_max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (const Tap& t : taps[static_cast<std::size_t>(idx[axis])]) {
          std::array<int, 3> src = idx;
          src[axis] = static_cast<int>(t.index);
          const double v =
              in[static_cast<std::size_t>(src[0]) +
                 static_cast<std::size_t>(shape[0]) * (src[1] + static_cast<std::size_t>(shape[1]) * src[2])];
          acc = take_max ? std::max(acc, v) : acc + t.weight * v;
        }
        out[static_cast<std::size_t>(a) +
            static_cast<std::size_t>(out_shape[0]) * (b + static_cast<std::size_t>(out_shape[1]) * c)] = acc;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> rescale_field(std::span<const double> field, const GridDims& from,
                                  const GridDims& to, RescaleMode mode) {
  if (from.rank != to.rank) fail(ErrorCode::DimensionMismatch, "rescale between different ranks");
  if (field.size() != from.element_count()) {
    fail(ErrorCode::DimensionMismatch, "field size does not match the source dims");
  }
  if (to.nx < 1 || to.ny < 1 || to.nz < 1) fail(ErrorCode::DimensionMismatch, "target dims must be >= 1");
  std::vector<double> cur(field.begin(), field.end());
  std::array<int, 3> shape{from.nx, from.ny, from.nz};
  const std::array<int, 3> target{to.nx, to.ny, to.nz};
  for (int axis = 0; axis < 3; ++axis) {
    if (shape[axis] == target[axis]) continue;
    cur = resample_axis(cur, shape, axis, target[axis], mode);
    shape[axis] = target[axis];
  }
  return cur;
}

}  // namespace topoforge
