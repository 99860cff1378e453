#include "topoforge/networks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"
#include "topoforge/weights_io.hpp"

namespace topoforge {

using nlohmann::json;
using nn::Layer;
using nn::LayerSpec;
using nn::Tensor;
using nn::Triple;

namespace {

Triple spatial_triple(const GridDims& d) { return {d.rank == 3 ? d.nz : 1, d.ny, d.nx}; }

std::vector<std::size_t> batch_shape(int channels, const GridDims& d) {
  std::vector<std::size_t> s{1, static_cast<std::size_t>(channels)};
  if (d.rank == 3) s.push_back(static_cast<std::size_t>(d.nz));
  s.push_back(static_cast<std::size_t>(d.ny));
  s.push_back(static_cast<std::size_t>(d.nx));
  return s;
}

void add_conv(std::vector<Layer>& layers, int rank, int& channels, int out, std::uint64_t seed, bool relu) {
  layers.push_back(nn::make_layer(LayerSpec::conv(rank, channels, out), seed + layers.size()));
  channels = out;
  if (relu) layers.push_back(nn::make_layer(LayerSpec::relu(rank, channels), 0));
}

json dims_json(const GridDims& d) {
  return d.rank == 3 ? json::array({d.ny, d.nx, d.nz}) : json::array({d.ny, d.nx});
}

GridDims dims_from_json(const json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() == 2) return GridDims::plane(v[1], v[0]);
  if (v.size() == 3) return GridDims::volume(v[1], v[0], v[2]);
  fail(ErrorCode::FormatError, "dims must have 2 or 3 entries");
}

// Layers before the first trainable one; their output is fixed during training.
std::size_t frozen_prefix(const Network& net) {
  const auto& layers = net.body.layers();
  std::size_t first = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].spec.has_parameters()) continue;
    if (!layers[l].frozen) break;
    first = l + 1;
  }
  return first;
}

struct Corpus {
  std::vector<Tensor> inputs;  // input of layer `first`
  std::vector<std::vector<double>> targets;
};

TrainHistory run_training(Network& net, std::size_t first, const Corpus& corpus,
                          std::vector<std::size_t> train_idx, std::vector<std::size_t> val_idx,
                          const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  nn::Sequential& body = net.body;
  const Triple body_out = body.output_dims(spatial_triple(net.spec.body_dims));
  const Triple out = spatial_triple(net.spec.output_dims);

  std::vector<std::size_t> trainable;
  for (std::size_t l = first; l < body.layers().size(); ++l) {
    if (body.layers()[l].spec.has_parameters() && !body.layers()[l].frozen) trainable.push_back(l);
  }
  if (trainable.empty()) fail(ErrorCode::InvalidArgument, "network has no trainable layers");

  nn::AdamState adam;
  adam.config = cfg.adam;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t batch = std::min(cfg.batch, train_idx.size());
  std::vector<std::size_t> grad_shape{1, 1};
  for (int a = net.spec.rank == 3 ? 0 : 1; a < 3; ++a) grad_shape.push_back(static_cast<std::size_t>(body_out[a]));

  const auto sample_loss = [&](std::size_t i, nn::ForwardTrace* trace, std::vector<double>* grad) {
    const Tensor y = body.forward(corpus.inputs[i], trace, first);
    std::vector<double> pred = fit_output(y.to_vector(), body_out, out);
    const auto& t = corpus.targets[i];
    double loss = 0.0;
    for (std::size_t q = 0; q < pred.size(); ++q) {
      pred[q] = std::clamp(pred[q], 0.0, 1.0);
      loss += (pred[q] - t[q]) * (pred[q] - t[q]);
    }
    loss /= static_cast<double>(pred.size());
    if (grad) {
      // Straight-through clamp: the gradient of the clamped loss is passed
      // to the raw output unchanged.
      *grad = nn::mse_grad(pred, t);
      *grad = fit_output_adjoint(std::move(*grad), out, body_out);
    }
    return loss;
  };

  TrainHistory h;
  std::vector<std::vector<Layer>> best;
  h.best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < train_idx.size(); b0 += batch) {
      const std::size_t b1 = std::min(train_idx.size(), b0 + batch);
      auto grads = body.zero_grads();
      for (std::size_t k = b0; k < b1; ++k) {
        nn::ForwardTrace trace;
        std::vector<double> g;
        epoch_loss += sample_loss(train_idx[k], &trace, &g);
        body.backward(trace, Tensor(grad_shape, std::move(g)), grads, first);
      }
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      std::vector<std::span<double>> params;
      std::vector<std::span<const double>> gspans;
      for (std::size_t l : trainable) {
        for (double& v : grads[l].dw.storage()) v *= scale;
        for (double& v : grads[l].db.storage()) v *= scale;
        params.push_back(body.layers()[l].weight.values());
        params.push_back(body.layers()[l].bias.values());
        gspans.push_back(grads[l].dw.values());
        gspans.push_back(grads[l].db.values());
      }
      nn::adam_step(params, gspans, adam);
    }
    const double train_loss = epoch_loss / static_cast<double>(train_idx.size());
    double val_loss = train_loss;
    if (!val_idx.empty()) {
      val_loss = 0.0;
      for (std::size_t i : val_idx) val_loss += sample_loss(i, nullptr, nullptr);
      val_loss /= static_cast<double>(val_idx.size());
    }
    h.train_loss.push_back(train_loss);
    h.val_loss.push_back(val_loss);
    h.epochs_run = epoch + 1;
    if (cfg.on_epoch) cfg.on_epoch(epoch, train_loss, val_loss);
    if (val_loss < h.best_loss) {
      h.best_loss = val_loss;
      h.best_epoch = epoch;
      best.assign(1, body.layers());
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
    if (train_loss <= cfg.target_loss) break;
  }
  if (!best.empty()) body.layers() = std::move(best.front());
  nn::round_to_f32(body);
  h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return h;
}

void split_validation(const Dataset& ds, const TrainConfig& cfg, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& val) {
  std::vector<std::size_t> pool = ds.train;
  if (pool.empty()) {
    pool.resize(ds.samples.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ull);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(pool.size())));
  if (cfg.validation_fraction > 0.0 && n_val == 0 && pool.size() >= 2) n_val = 1;
  val.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  if (train.empty()) fail(ErrorCode::DatasetMismatch, "no training samples left after the validation split");
}

void check_dataset(const Network& net, const Dataset& ds) {
  if (!net.loaded()) fail(ErrorCode::WeightsNotLoaded, "network has no layers");
  if (!(ds.dims == net.spec.output_dims) || ds.channels != net.spec.in_channels) {
    fail(ErrorCode::DatasetMismatch, "dataset dims/channels do not match the network input");
  }
  if (ds.samples.empty()) fail(ErrorCode::DatasetMismatch, "dataset is empty");
}

TrainHistory train_from(Network& net, const Dataset& ds, const TrainConfig& cfg, std::size_t first) {
  cfg.validate();
  check_dataset(net, ds);
  std::vector<std::size_t> train, val;
  split_validation(ds, cfg, train, val);
  std::vector<Sample> mirrored;
  for (const auto& flip : mirror_flips(cfg.mirror_axes, ds.dims.rank)) {
    for (std::size_t i : train) mirrored.push_back(mirror_sample(ds, ds.samples[i], flip));
  }
  const std::size_t n = ds.samples.size();
  Corpus corpus;
  corpus.inputs.resize(n + mirrored.size());
  corpus.targets.resize(n + mirrored.size());
  const auto add = [&](std::size_t slot, const Sample& s) {
    const std::vector<double> in(s.input.begin(), s.input.end());
    Tensor x = net.front(in);
    if (first > 0) x = net.body.forward(x, nullptr, 0, first);
    corpus.inputs[slot] = std::move(x);
    corpus.targets[slot].assign(s.target.begin(), s.target.end());
  };
  for (std::size_t i : train) add(i, ds.samples[i]);
  for (std::size_t i : val) add(i, ds.samples[i]);
  for (std::size_t k = 0; k < mirrored.size(); ++k) {
    add(n + k, mirrored[k]);
    train.push_back(n + k);
  }
  return run_training(net, first, corpus, std::move(train), std::move(val), cfg);
}

json spec_json(const NetworkSpec& s) {
  return {{"v", 1},
          {"kind", s.kind == NetworkKind::Source ? "source" : "target"},
          {"rank", s.rank},
          {"in_channels", s.in_channels},
          {"body_dims", dims_json(s.body_dims)},
          {"output_dims", dims_json(s.output_dims)},
          {"plan",
           {{"encoder", s.plan.encoder},
            {"decoder", s.plan.decoder},
            {"transposes", s.plan.transposes},
            {"head", s.plan.head}}},
          {"transferred", s.transferred},
          {"transferred_hash", s.transferred_hash},
          {"freeze", s.freeze == FreezePolicy::Frozen ? "frozen" : "unfrozen"},
          {"clamp", true}};
}

}  // namespace

namespace {

// Matrix [to x from] (row-major) of the 1D resampling from `from` cells to `to` cells.
std::vector<double> axis_weights(int from, int to) {
  std::vector<double> w(static_cast<std::size_t>(to) * from);
  std::vector<double> unit(static_cast<std::size_t>(from), 0.0);
  for (int j = 0; j < from; ++j) {
    unit[j] = 1.0;
    const auto col = rescale_field(unit, GridDims::plane(from, 1), GridDims::plane(to, 1), RescaleMode::Average);
    unit[j] = 0.0;
    for (int i = 0; i < to; ++i) w[static_cast<std::size_t>(i) * from + j] = col[i];
  }
  return w;
}

// out = W v along `axis` of a [D, H, W] raster, or W^T v when `adjoint`.
std::vector<double> apply_axis(const std::vector<double>& v, Triple& shape, int axis, int n, bool adjoint) {
  const int m = shape[axis];
  const std::vector<double> w = adjoint ? axis_weights(n, m) : axis_weights(m, n);
  std::size_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(shape[a]);
  for (int a = axis + 1; a < 3; ++a) inner *= static_cast<std::size_t>(shape[a]);
  std::vector<double> out(outer * n * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double c = adjoint ? w[static_cast<std::size_t>(j) * n + i] : w[static_cast<std::size_t>(i) * m + j];
        if (c == 0.0) continue;
        const double* src = v.data() + (o * m + j) * inner;
        double* dst = out.data() + (o * n + i) * inner;
        for (std::size_t k = 0; k < inner; ++k) dst[k] += c * src[k];
      }
  shape[axis] = n;
  return out;
}

}  // namespace

// Resamples the head output onto the requested grid. The transposed conv
// overshoots when the resolution ratio is not an integer; resampling (rather
// than cropping) keeps the whole domain in view.
std::vector<double> fit_output(std::vector<double> v, Triple from, const Triple& to) {
  for (int axis = 0; axis < 3; ++axis)
    if (from[axis] != to[axis]) v = apply_axis(v, from, axis, to[axis], false);
  return v;
}

// Adjoint of fit_output: maps a gradient on `to` back onto `from`.
std::vector<double> fit_output_adjoint(std::vector<double> g, Triple to, const Triple& from) {
  for (int axis = 2; axis >= 0; --axis)
    if (from[axis] != to[axis]) g = apply_axis(g, to, axis, from[axis], true);
  return g;
}


void FilterPlan::validate() const {
  if (encoder.size() != 8 || decoder.size() != 7 || transposes.size() != 3 || head.size() != 3) {
    fail(ErrorCode::ShapePlanInvalid, "filter plan needs 8 encoder, 7 decoder, 3 transposed and 3 head entries");
  }
  for (const auto* v : {&encoder, &decoder, &transposes, &head}) {
    for (int f : *v) {
      if (f < 1) fail(ErrorCode::ShapePlanInvalid, "filter counts must be >= 1");
    }
  }
  if (head.back() != 1) fail(ErrorCode::ShapePlanInvalid, "the head must end in one channel");
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch < 1) fail(ErrorCode::InvalidArgument, "batch must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "validation fraction must lie in [0, 1)");
  }
  if (!(target_loss >= 0.0)) fail(ErrorCode::InvalidArgument, "target loss must be >= 0");
}

std::array<Triple, 3> pool_windows(const GridDims& dims) {
  std::array<Triple, 3> w{};
  Triple cur = spatial_triple(dims);
  for (auto& win : w) {
    for (int a = 0; a < 3; ++a) {
      win[a] = (cur[a] % 2 == 0) ? 2 : 1;
      cur[a] /= win[a];
    }
  }
  return w;
}

Tensor Network::front(std::span<const double> input) const {
  const std::size_t cells_out = spec.output_dims.element_count();
  if (input.size() != cells_out * static_cast<std::size_t>(spec.in_channels)) {
    fail(ErrorCode::DimensionMismatch, "encoded input does not match the network's input dims");
  }
  if (spec.body_dims == spec.output_dims) {
    return Tensor(batch_shape(spec.in_channels, spec.body_dims), std::vector<double>(input.begin(), input.end()));
  }
  const std::size_t cells_in = spec.body_dims.element_count();
  std::vector<double> data;
  data.reserve(cells_in * static_cast<std::size_t>(spec.in_channels));
  for (int c = 0; c < spec.in_channels; ++c) {
    const RescaleMode mode = c == 0 ? RescaleMode::Average : (c <= spec.rank ? RescaleMode::Max : RescaleMode::Sum);
    const auto part = rescale_field(input.subspan(static_cast<std::size_t>(c) * cells_out, cells_out),
                                    spec.output_dims, spec.body_dims, mode);
    data.insert(data.end(), part.begin(), part.end());
  }
  return Tensor(batch_shape(spec.in_channels, spec.body_dims), std::move(data));
}

std::vector<double> Network::run(const Tensor& body_input) const {
  if (!loaded()) fail(ErrorCode::WeightsNotLoaded, "network has no layers");
  const Tensor y = body.forward(body_input);
  return fit_output(y.to_vector(), body.output_dims(spatial_triple(spec.body_dims)), spatial_triple(spec.output_dims));
}

std::vector<double> Network::infer(std::span<const double> input) const {
  if (!loaded()) fail(ErrorCode::WeightsNotLoaded, "network has no layers");
  auto out = run(front(input));
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Network build_source(int rank, const GridDims& dims, const FilterPlan& plan, std::uint64_t seed) {
  if (rank != 2 && rank != 3) fail(ErrorCode::ShapePlanInvalid, "rank must be 2 or 3");
  if (dims.rank != rank) fail(ErrorCode::ShapePlanInvalid, "dims rank does not match the network rank");
  plan.validate();
  const auto windows = pool_windows(dims);
  std::vector<Layer> layers;
  int ch = channel_count(rank);
  for (std::size_t i = 0; i < 8; ++i) {
    add_conv(layers, rank, ch, plan.encoder[i], seed, true);
    if (i == 1 || i == 3 || i == 5) layers.push_back(nn::make_layer(LayerSpec::max_pool(rank, ch, windows[i / 2]), 0));
  }
  const std::size_t split[3] = {3, 2, 2};
  std::size_t d = 0;
  for (int t = 0; t < 3; ++t) {
    layers.push_back(nn::make_layer(LayerSpec::conv_transpose(rank, ch, plan.transposes[t], windows[2 - t]),
                                    seed + layers.size()));
    ch = plan.transposes[t];
    for (std::size_t k = 0; k < split[t]; ++k) add_conv(layers, rank, ch, plan.decoder[d++], seed, true);
  }
  add_conv(layers, rank, ch, 1, seed, false);

  Network net;
  net.spec.kind = NetworkKind::Source;
  net.spec.rank = rank;
  net.spec.in_channels = channel_count(rank);
  net.spec.body_dims = dims;
  net.spec.output_dims = dims;
  net.spec.plan = plan;
  net.body = nn::Sequential(std::move(layers));
  nn::round_to_f32(net.body);
  if (net.body.output_dims(spatial_triple(dims)) != spatial_triple(dims)) {
    fail(ErrorCode::ShapePlanInvalid, "pool/upsample plan does not restore the input dims");
  }
  return net;
}

Network build_target(const Network& source, const GridDims& hi, const TargetConfig& config) {
  if (!source.loaded()) fail(ErrorCode::WeightsNotLoaded, "source network has no layers");
  if (source.spec.kind != NetworkKind::Source) fail(ErrorCode::IncompatibleDims, "transfer needs a source network");
  const GridDims& lo = source.spec.body_dims;
  if (hi.rank != lo.rank) fail(ErrorCode::IncompatibleDims, "target rank differs from the source");
  const Triple lo_t = spatial_triple(lo);
  const Triple hi_t = spatial_triple(hi);
  Triple stride{};
  for (int a = 0; a < 3; ++a) {
    if (hi_t[a] < lo_t[a]) {
      fail(ErrorCode::IncompatibleDims, "target dims must be >= source dims on every axis");
    }
    stride[a] = (hi_t[a] + lo_t[a] - 1) / lo_t[a];
  }

  const auto& src = source.body.layers();
  const std::size_t keep = src.size() - 1;
  std::vector<Layer> layers(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(keep));
  const std::string hash = nn::parameter_hash(source.body, 0, keep);
  for (Layer& l : layers) l.frozen = config.freeze == FreezePolicy::Frozen && l.spec.has_parameters();

  const int rank = source.spec.rank;
  int ch = src[keep].spec.in_channels;
  const FilterPlan& plan = source.spec.plan;
  layers.push_back(nn::make_layer(LayerSpec::conv_transpose(rank, ch, ch, stride), config.seed + layers.size()));
  for (std::size_t k = 0; k < plan.head.size(); ++k) {
    add_conv(layers, rank, ch, plan.head[k], config.seed, k + 1 < plan.head.size());
  }
  Network net;
  net.spec = source.spec;
  net.spec.kind = NetworkKind::Target;
  net.spec.output_dims = hi;
  net.spec.transferred = keep;
  net.spec.transferred_hash = hash;
  net.spec.freeze = config.freeze;
  net.body = nn::Sequential(std::move(layers));
  nn::round_to_f32(net.body);
  if (nn::parameter_hash(net.body, 0, keep) != hash) {
    fail(ErrorCode::ChecksumMismatch, "transferred parameters changed during surgery");
  }
  const Triple out = net.body.output_dims(lo_t);
  for (int a = 0; a < 3; ++a) {
    if (out[a] < hi_t[a]) fail(ErrorCode::IncompatibleDims, "head cannot reach the target dims");
  }
  return net;
}

TrainHistory train_source(Network& network, const Dataset& dataset, const TrainConfig& config) {
  return train_from(network, dataset, config, 0);
}

TrainHistory fine_tune(Network& target, const Dataset& dataset, const TrainConfig& config) {
  return train_from(target, dataset, config, frozen_prefix(target));
}

Prediction predict(const Network& network, const DesignDomain& domain, const BoundaryConditions& bc,
                   double volfrac, const ChannelOptions& channels) {
  if (!network.loaded()) fail(ErrorCode::WeightsNotLoaded, "no trained weights loaded");
  if (!(domain.dims() == network.spec.output_dims)) {
    fail(ErrorCode::DimensionMismatch, "problem dims do not match the network's output dims");
  }
  const Tensor x = encode_channels(domain, bc, volfrac, channels);
  Prediction p;
  p.densities = network.infer(x.values());
  p.binary.resize(p.densities.size());
  for (std::size_t e = 0; e < p.densities.size(); ++e) {
    if (!domain.is_active(e)) p.densities[e] = 0.0;
    p.binary[e] = p.densities[e] >= 0.5 ? 1 : 0;
  }
  return p;
}

std::vector<std::uint8_t> serialize_network(const Network& network, const std::string& extra) {
  json meta = spec_json(network.spec);
  meta["extra"] = json::parse(extra);
  return nn::serialize_weights(network.body, meta.dump());
}

Network deserialize_network(std::span<const std::uint8_t> bytes, std::string* extra) {
  nn::WeightFile wf = nn::deserialize_weights(bytes);
  json m;
  try {
    m = json::parse(wf.metadata);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("weight metadata is not JSON: ") + e.what());
  }
  Network net;
  try {
    NetworkSpec& s = net.spec;
    s.kind = m.at("kind").get<std::string>() == "target" ? NetworkKind::Target : NetworkKind::Source;
    s.rank = m.at("rank").get<int>();
    s.in_channels = m.at("in_channels").get<int>();
    s.body_dims = dims_from_json(m.at("body_dims"));
    s.output_dims = dims_from_json(m.at("output_dims"));
    const json& p = m.at("plan");
    s.plan.encoder = p.at("encoder").get<std::vector<int>>();
    s.plan.decoder = p.at("decoder").get<std::vector<int>>();
    s.plan.transposes = p.at("transposes").get<std::vector<int>>();
    s.plan.head = p.at("head").get<std::vector<int>>();
    s.transferred = m.at("transferred").get<std::size_t>();
    s.transferred_hash = m.at("transferred_hash").get<std::string>();
    s.freeze = m.value("freeze", "frozen") == "frozen" ? FreezePolicy::Frozen : FreezePolicy::Unfrozen;
    if (extra) *extra = m.contains("extra") ? m["extra"].dump() : "{}";
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("weight metadata is incomplete: ") + e.what());
  }
  net.body = std::move(wf.net);
  if (net.spec.kind == NetworkKind::Target &&
      nn::parameter_hash(net.body, 0, net.spec.transferred) != net.spec.transferred_hash) {
    fail(ErrorCode::ChecksumMismatch, "transferred parameters do not match the recorded source hash");
  }
  return net;
}

void save_network(const std::string& path, const Network& network, const std::string& extra) {
  write_file(path, serialize_network(network, extra));
}

Network load_network(const std::string& path, std::string* extra) {
  return deserialize_network(read_file(path), extra);
}

}  // namespace topoforge
