#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topoforge/material.hpp"
#include "topoforge/mesh_domain.hpp"

namespace topoforge {

// Fields are full rasters (x fastest). An empty mask means every element counts.

double mse_metric(std::span<const double> pred, std::span<const double> truth,
                  std::span<const std::uint8_t> mask = {});

/// Agreement fraction after rounding both fields (0.5 rounds up).
double binary_accuracy(std::span<const double> pred, std::span<const double> truth,
                       std::span<const std::uint8_t> mask = {});

/// XOR of the 0.5-thresholded fields; 0 outside the mask.
std::vector<std::uint8_t> symmetric_difference(std::span<const double> a, std::span<const double> b,
                                               std::span<const std::uint8_t> mask = {});

/// True when every load node is linked to a supported node through
/// elements with density >= 0.5 (elements sharing a node are linked).
bool load_path_connected(const DesignDomain& domain, const BoundaryConditions& bc,
                         std::span<const double> raster);

/// Compliance of the 0.5-thresholded raster under the SIMP moduli.
double thresholded_compliance(const DesignDomain& domain, const BoundaryConditions& bc,
                              std::span<const double> raster, const MaterialModel& material = {});

/// (c_pred - c_truth) / c_truth of the thresholded fields. Throws
/// DisconnectedPrediction when a thresholded field has no load path.
double compliance_error(std::span<const double> pred, std::span<const double> truth,
                        const DesignDomain& domain, const BoundaryConditions& bc,
                        const MaterialModel& material = {});

struct SampleScore {
  double mse = 0.0;
  double ba = 0.0;
  std::optional<double> compliance_error;  // empty when not evaluated or disconnected
  bool disconnected = false;
  double seconds = 0.0;  // prediction time
};

struct EvalReport {
  std::vector<SampleScore> samples;
  double mse = 0.0;
  double ba = 0.0;
  double compliance_error = 0.0;
  double compliance_error_std = 0.0;
  std::size_t compliance_count = 0;
  std::size_t disconnected = 0;
  double mean_seconds = 0.0;
  double max_seconds = 0.0;

  std::string to_json() const;
};

/// Aggregates as plain means of the per-sample values (std is the population std).
EvalReport aggregate(std::vector<SampleScore> samples);

/// 8-bit binary PGM, 0 -> white and 1 -> black, top image row = highest y.
/// 3D rasters are written as z slices stacked top to bottom.
void write_pgm(const std::string& path, std::span<const double> raster, const GridDims& dims);

struct Dataset;
class Network;

/// Scores `network` on dataset samples (the test split when `indices` is
/// empty), predicting from each sample's rebuilt problem. Metrics are taken
/// over active elements.
EvalReport evaluate_network(const Network& network, const Dataset& dataset,
                            std::span<const std::size_t> indices = {}, bool with_compliance = true);

}  // namespace topoforge
