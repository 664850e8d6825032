//
// Copyright 2026 The flmarket Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef FLMARKET_NN_H_
#define FLMARKET_NN_H_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flmarket/rng.h"

namespace flmarket::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OutputActivation {
  kNone,
  // Softmax over consecutive groups of `group_size` outputs.
  kSoftmaxRows,
  // Softmax over the whole output.
  kSoftmaxVector,
};

std::string_view OutputActivationName(OutputActivation a);

// y = x W^T + b, with W of shape (out, in).
struct DenseLayer {
  Matrix weights;
  Vector bias;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

class GradientTape;

// Fully connected network with tanh on every hidden layer and an optional
// softmax head. Inputs are batched as rows.
class DenseNetwork {
 public:
  // `widths` lists input, hidden and output sizes. Parameters start at zero.
  DenseNetwork(std::vector<int> widths, OutputActivation output,
               int softmax_group = 0);

  // Same shape with weights uniform on [-r, r], r = sqrt(6 / (fan_in +
  // fan_out)), and zero biases.
  static DenseNetwork GlorotUniform(std::vector<int> widths,
                                    OutputActivation output, int softmax_group,
                                    Rng& rng);

  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }
  OutputActivation output_activation() const { return output_; }
  int softmax_group() const { return softmax_group_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // One row per sample. If `tape` is non-null it is (re)filled for a
  // subsequent Backward call.
  Matrix Forward(const Matrix& inputs, GradientTape* tape = nullptr) const;
  Vector Forward(const Vector& input, GradientTape* tape = nullptr) const;

  size_t ParameterCount() const;
  std::vector<double> FlattenParameters() const;
  void SetParameters(const std::vector<double>& flat);

  friend bool operator==(const DenseNetwork& a, const DenseNetwork& b);

 private:
  std::vector<DenseLayer> layers_;
  OutputActivation output_;
  int softmax_group_;
};

// Gradients with the same shapes as a network's parameters, plus the
// gradient with respect to the batched input.
struct NetworkGradients {
  std::vector<DenseLayer> layers;
  Matrix input;

  static NetworkGradients ZerosLike(const DenseNetwork& net);
  NetworkGradients& operator+=(const NetworkGradients& other);
  std::vector<double> Flatten() const;
};

// Activations recorded by one forward pass. A tape can be consumed by a
// single Backward call; reuse throws std::logic_error.
class GradientTape {
 public:
  bool consumed() const { return consumed_; }
  bool recorded() const { return net_ != nullptr; }

 private:
  friend class DenseNetwork;
  friend NetworkGradients Backward(GradientTape& tape, const Matrix& upstream,
                                   bool parameter_gradients);

  const DenseNetwork* net_ = nullptr;
  // layer_inputs[l] is the input of layer l; layer_inputs[0] is the batch.
  std::vector<Matrix> layer_inputs;
  Matrix output;
  bool consumed_ = false;
};

// Reverse-mode pass for a recorded forward pass. `upstream` is dLoss/dOutput
// with the same shape as the forward output. When `parameter_gradients` is
// false only the input gradient is computed.
NetworkGradients Backward(GradientTape& tape, const Matrix& upstream,
                          bool parameter_gradients = true);

// params -= lr * grads
void SgdStep(DenseNetwork& net, const NetworkGradients& grads, double lr);

// Text serialization. Each network block is preceded by the "MBRv1" magic
// line when written standalone; checkpoint files holding several networks
// write the magic line once and then one block per network.
inline constexpr std::string_view kMagic = "MBRv1";
void WriteNetworkBlock(std::ostream& os, const DenseNetwork& net);
DenseNetwork ReadNetworkBlock(std::istream& is);
void WriteNetwork(std::ostream& os, const DenseNetwork& net);
DenseNetwork ReadNetwork(std::istream& is);
// Reads and checks the magic line.
void ExpectMagic(std::istream& is);

}  // namespace flmarket::nn

#endif  // FLMARKET_NN_H_
