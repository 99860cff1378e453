#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "topoforge/adam.hpp"
#include "topoforge/datagen.hpp"
#include "topoforge/layers.hpp"
#include "topoforge/mesh_domain.hpp"

namespace topoforge {

/// Filter counts of the encoder-decoder. The decoder convs are split 3/2/2
/// after the three transposed convs; the head is used by target networks.
struct FilterPlan {
  std::vector<int> encoder{16, 16, 32, 32, 64, 64, 64, 64};
  std::vector<int> decoder{64, 64, 64, 32, 32, 16, 16};
  std::vector<int> transposes{64, 32, 16};
  std::vector<int> head{16, 16, 1};

  void validate() const;
  bool operator==(const FilterPlan&) const = default;
};

enum class NetworkKind { Source, Target };
enum class FreezePolicy { Frozen, Unfrozen };

struct NetworkSpec {
  NetworkKind kind = NetworkKind::Source;
  int rank = 2;
  int in_channels = 5;
  GridDims body_dims;    // resolution the encoder runs at
  GridDims output_dims;  // resolution of encoded inputs and predictions
  FilterPlan plan;
  std::size_t transferred = 0;   // leading layers copied from a source network
  std::string transferred_hash;  // parameter_hash of those layers
  FreezePolicy freeze = FreezePolicy::Frozen;
};

class Network {
 public:
  NetworkSpec spec;
  nn::Sequential body;

  bool loaded() const { return !body.layers().empty(); }
  /// Encoded sample [C, spatial] at output dims -> body input [1, C, spatial]
  /// at body dims (density averaged, constraints max-pooled, forces summed).
  nn::Tensor front(std::span<const double> input) const;
  /// Unclamped output raster at output dims for a body input.
  std::vector<double> run(const nn::Tensor& body_input) const;
  /// front -> run -> clamp to [0, 1].
  std::vector<double> infer(std::span<const double> input) const;
};

/// Max-pool windows (d, h, w) of the three encoder stages: an axis is halved
/// while its current extent is even, otherwise left alone.
std::array<nn::Triple, 3> pool_windows(const GridDims& dims);

/// Encoder-decoder whose output matches `dims` with one channel.
Network build_source(int rank, const GridDims& dims, const FilterPlan& plan = {}, std::uint64_t seed = 1);

/// Linear resampling of a [D, H, W] raster (x fastest) from `from` to `to`;
/// maps the head output onto the target grid. Identity when equal.
std::vector<double> fit_output(std::vector<double> v, nn::Triple from, const nn::Triple& to);
/// Transpose of fit_output, for gradients.
std::vector<double> fit_output_adjoint(std::vector<double> g, nn::Triple to, const nn::Triple& from);

struct TargetConfig {
  FreezePolicy freeze = FreezePolicy::Frozen;
  std::uint64_t seed = 1;
};

/// Source body minus its last layer, behind a rescaling front, followed by a
/// transposed conv (stride ceil(hi / source) per axis) and the head convs.
/// The head output is resampled onto `hi` when the stride overshoots it.
Network build_target(const Network& source, const GridDims& hi, const TargetConfig& config = {});

struct TrainConfig {
  int epochs = 50;
  std::size_t batch = 32;  // clamped to the training-set size
  nn::AdamConfig adam;
  std::uint64_t seed = 1;
  int patience = 0;                  // epochs without validation gain before stopping; 0 = off
  double validation_fraction = 0.1;  // carved from the training split
  /// Adds mirror images of the training part (never the validation part)
  /// across every non-empty subset of these axes; 0 = x, 1 = y, 2 = z.
  std::vector<int> mirror_axes;
  double target_loss = 0.0;  // stop once an epoch's training loss is at or below this
  std::function<void(int epoch, double train_loss, double val_loss)> on_epoch;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // equals train_loss when there is no validation part
  int best_epoch = -1;
  double best_loss = 0.0;
  int epochs_run = 0;
  double seconds = 0.0;
};

/// ADAM/MSE training on the dataset's training split. Returns with the
/// best-validation weights installed.
TrainHistory train_source(Network& network, const Dataset& dataset, const TrainConfig& config);
/// Same loop, updating only unfrozen layers; frozen-prefix features are
/// computed once per sample.
TrainHistory fine_tune(Network& target, const Dataset& dataset, const TrainConfig& config);

struct Prediction {
  std::vector<double> densities;     // raster, 0 on inactive elements
  std::vector<std::uint8_t> binary;  // densities >= 0.5
};

Prediction predict(const Network& network, const DesignDomain& domain, const BoundaryConditions& bc,
                   double volfrac, const ChannelOptions& channels = {});

/// Checkpoint in the TWGT format; the network spec plus `extra` (a JSON
/// object, e.g. a training manifest) are stored as metadata.
void save_network(const std::string& path, const Network& network, const std::string& extra = "{}");
std::vector<std::uint8_t> serialize_network(const Network& network, const std::string& extra = "{}");
Network deserialize_network(std::span<const std::uint8_t> bytes, std::string* extra = nullptr);
Network load_network(const std::string& path, std::string* extra = nullptr);

}  // namespace topoforge
