#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eua/autodiff.hpp"
#include "eua/data.hpp"
#include "eua/serialize.hpp"
#include "eua/tensor.hpp"

namespace eua {

enum class LayerKind {
  Normalize,  // fixed per-channel (x - mean) / std, not trainable
  Conv2d,
  Relu,
  MaxPool2d,
  Flatten,
  Linear,
  AddSkip,  // adds the saved output of layer skip_from (residual join)
};

struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  ops::ConvAttrs conv;   // Conv2d only
  ops::PoolAttrs pool;   // MaxPool2d only
  int skip_from = -1;    // AddSkip only; absolute index into layers
  std::string param;     // name stem for Conv2d/Linear ("<stem>.w"/"<stem>.b")
  Shape w_shape;         // parameter shapes for Conv2d/Linear
  Shape b_shape;
};

struct ModelSpec {
  std::string arch;
  std::vector<LayerDesc> layers;
  std::vector<int> key_layers;  // strictly increasing tap points
  int num_classes = 0;
  Shape input_shape;  // (C,H,W)
  std::vector<float> norm_mean;
  std::vector<float> norm_std;
};

struct Model {
  ModelSpec spec;
  std::map<std::string, Tensor> params;
  bool trained = false;
};

// Known architectures. Both stack four width-(16,32,64,128) blocks, each
// halving the spatial dims, with the four block outputs as key layers and a
// single linear head on the flattened last block.
//   smallconv4: block = conv3x3(p1) -> relu -> maxpool2
//   smallres4:  block = stem conv -> relu -> [conv -> relu -> conv] + skip
//               -> relu -> maxpool2
ModelSpec build_model(const std::string& arch_name, int num_classes,
                      const Shape& input_shape);

// Kaiming-uniform fan-in weights (zero biases), one derived stream per
// parameter name so init does not depend on map iteration details.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

// Output (C,H,W) of layers[0..index] for a single sample.
Shape layer_output_shape(const ModelSpec& spec, int index);

// Runs layers [first, last) on tape id x; taps holds ids for any requested
// key layers inside the range. All forwards (training, inference, edge,
// cloud) go through this one interpreter so split execution is bitwise
// identical to monolithic execution by construction.
struct TracedRun {
  Tape::Id out = -1;
  std::map<int, Tape::Id> taps;
  std::map<std::string, Tape::Id> param_ids;  // filled when train_params
};
TracedRun run_layers_traced(Tape& tape, const Model& m, Tape::Id x, int first,
                            int last, const std::vector<int>& requested_taps = {},
                            bool train_params = false);

// Untraced convenience wrapper over a throwaway tape.
Tensor run_layers(const Model& m, const Tensor& x, int first, int last,
                  const std::vector<int>& requested_taps = {},
                  std::map<int, Tensor>* taps = nullptr);

struct ForwardResult {
  Tensor logits;
  std::map<int, Tensor> taps;
};
// Full forward; requested taps must be key layers present in this model.
ForwardResult forward_with_taps(const Model& m, const Tensor& batch,
                                const std::vector<int>& requested_taps = {});

// Argmax class per sample, ties broken toward the lowest class index.
std::vector<int> predict(const Model& m, const Dataset& d, int batch = 100);
double accuracy(const Model& m, const Dataset& d, int batch = 100);

struct TrainConfig {
  int epochs = 10;
  float lr = 1e-3f;
  int batch = 100;
  std::uint64_t seed = 0;
};
struct TrainHistory {
  std::vector<double> train_loss;    // mean cross-entropy per epoch
  std::vector<double> val_accuracy;  // percent per epoch
};
// Adam + cross-entropy on the train split; deterministic for a fixed seed.
TrainHistory train_victim(Model& m, const Dataset& train, const Dataset& val,
                          const TrainConfig& cfg);

void save_model(const std::string& path, const Model& m, Json extra_meta = Json::object());
Model load_model(const std::string& path);

}  // namespace eua
