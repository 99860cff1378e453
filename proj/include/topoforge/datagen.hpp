#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topoforge/material.hpp"
#include "topoforge/mesh_domain.hpp"
#include "topoforge/simp.hpp"
#include "topoforge/tensor.hpp"

namespace topoforge {

struct SamplerConfig {
  double force_min = -100.0;  // Newtons, per component
  double force_max = 100.0;
  /// Admissible load region per axis, as fractions of the domain extent.
  std::array<double, 3> region_lo{0.5, 0.0, 0.0};
  std::array<double, 3> region_hi{1.0, 1.0, 1.0};
  std::vector<BcCase> cases{BcCase::Cantilever, BcCase::SimplySupported,
                            BcCase::ConstrainedCantilever};
  double volfrac = 0.5;

  void validate() const;
};

struct SampledProblem {
  BcCase bc_case = BcCase::Cantilever;
  BoundaryConditions bc;
  double volfrac = 0.5;
};

/// Boundary nodes inside the admissible region that carry no support under `c`.
std::vector<std::size_t> admissible_load_nodes(const DesignDomain& domain,
                                               const SamplerConfig& config, BcCase c);

SampledProblem sample_problem(const DesignDomain& domain, const SamplerConfig& config,
                              std::mt19937_64& rng);

struct ChannelOptions {
  bool normalize_forces = false;  // divide forces by force_scale
  double force_scale = 100.0;
};

/// 1 density channel + one constraint channel and one force channel per axis.
inline int channel_count(int rank) { return 2 * rank + 1; }

/// Input tensor of shape [C, ny, nx] (2D) or [C, nz, ny, nx] (3D). Node values
/// land in the element cell whose lower-left corner is the node, clamped to
/// the grid; constraints combine by max and forces by sum.
nn::Tensor encode_channels(const DesignDomain& domain, const BoundaryConditions& bc,
                           double volfrac, const ChannelOptions& options = {});

/// Spatial tensor shape of a grid, slowest axis first: [ny, nx] or [nz, ny, nx].
std::vector<std::size_t> spatial_shape(const GridDims& dims);

struct SampleMeta {
  std::uint64_t seed = 0;
  std::size_t domain_index = 0;
  BcCase bc_case = BcCase::Cantilever;
  std::size_t load_node = 0;
  std::array<double, 3> force{0.0, 0.0, 0.0};
  double volfrac = 0.5;
  int simp_iterations = 0;
  bool simp_converged = false;
  double compliance = 0.0;
};

struct Sample {
  std::vector<float> input;   // channels x spatial, x fastest
  std::vector<float> target;  // spatial raster, 0 outside the mask
  SampleMeta meta;
};

struct Dataset {
  GridDims dims;
  int channels = 5;
  std::vector<Sample> samples;
  // Populated from the manifest when present.
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::string config_hash;
  ChannelOptions encoding;  // how the force channels were scaled
};

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Binary "TOPO" container; metadata lives in the JSON manifest.
std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes);

std::string manifest_path(const std::string& dataset_path);
/// Writes `path` and its manifest sidecar.
void write_dataset(const std::string& path, const Dataset& dataset, const std::string& manifest_json);
/// Reads `path`; merges metadata and splits from the manifest sidecar when it exists.
Dataset read_dataset(const std::string& path);

struct GenerationConfig {
  std::size_t count = 10;
  std::uint64_t seed = 1;
  /// Explicit per-sample seeds; when non-empty, replaces seed-derived ones.
  std::vector<std::uint64_t> seeds;
  SamplerConfig sampler;
  SimpConfig simp;
  MaterialModel material;
  ChannelOptions channels;
  double test_fraction = 0.2;
  double max_failure_rate = 0.1;
};

struct GenerationReport {
  Dataset dataset;
  std::size_t attempts = 0;
  std::size_t failures = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> log;
  std::string manifest_json;
};

/// Seed used for the i-th generated sample.
std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index);

/// Runs sample_problem -> optimize -> encode_channels per seed. All domains
/// must share dims. Writes the dataset when `out_path` is non-empty.
GenerationReport generate_dataset(std::span<const DesignDomain> domains,
                                  const GenerationConfig& config,
                                  const std::string& out_path = {});

/// Deterministic shuffled split; the test part holds ceil(fraction * n) samples.
void split_indices(std::size_t n, double test_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test);

/// Domain of a generated sample; the mask is read off the density channel.
DesignDomain sample_domain(const Dataset& dataset, const Sample& sample);
/// Standard supports of the sample's case plus its recorded load.
BoundaryConditions sample_conditions(const DesignDomain& domain, const Sample& sample);

/// Mirror image of a sample across the mid-planes normal to the flagged axes.
/// The problem is rebuilt from the metadata (standard supports of its case,
/// its load, the mask read off the density channel), mirrored node by node and
/// re-encoded with the dataset's encoding; the target is mirrored as a raster, which is
/// exact because the optimization problem is itself mirror-equivariant. The
/// result keeps the source metadata, so mirror originals, not mirrors.
Sample mirror_sample(const Dataset& dataset, const Sample& sample, std::array<bool, 3> flip);

/// Flip patterns for every non-empty subset of `axes` (axis 0 = x).
std::vector<std::array<bool, 3>> mirror_flips(std::span<const int> axes, int rank);

enum class RescaleMode {
  Average,  // area/volume-weighted mean on downsampling
  Sum,      // mean scaled by the cell-count ratio (conserves totals)
  Max,      // maximum over overlapped cells (keeps indicator channels 0/1)
};

/// Resamples a spatial raster. Per axis: overlap-weighted pooling when
/// shrinking, linear interpolation between cell centres when growing.
std::vector<double> rescale_field(std::span<const double> field, const GridDims& from,
                                  const GridDims& to, RescaleMode mode = RescaleMode::Average);

}  // namespace topoforge
