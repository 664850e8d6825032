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

#include "flmarket/nn.h"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "flmarket/errors.h"

namespace flmarket::nn {
namespace {

// Row-wise softmax over column groups [g*size, (g+1)*size).
void SoftmaxGroups(Matrix& logits, Eigen::Index group_size) {
  const Eigen::Index groups = logits.cols() / group_size;
  for (Eigen::Index g = 0; g < groups; ++g) {
    auto block = logits.middleCols(g * group_size, group_size);
    const Vector row_max = block.rowwise().maxCoeff();
    block = (block.colwise() - row_max).array().exp().matrix();
    const Vector sums = block.rowwise().sum();
    block = block.array().colwise() / sums.array();
  }
}

// dL/dlogits = y * (G - sum_group(G * y)).
Matrix SoftmaxGroupsBackward(const Matrix& y, const Matrix& upstream,
                             Eigen::Index group_size) {
  Matrix out(y.rows(), y.cols());
  const Eigen::Index groups = y.cols() / group_size;
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto yb = y.middleCols(g * group_size, group_size);
    const auto gb = upstream.middleCols(g * group_size, group_size);
    const Vector dot = yb.cwiseProduct(gb).rowwise().sum();
    out.middleCols(g * group_size, group_size) =
        yb.cwiseProduct(gb - dot.replicate(1, group_size));
  }
  return out;
}

std::string FormatDouble(double x) {
  std::ostringstream os;
  os << std::hexfloat << x;
  return os.str();
}

double ParseDouble(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw ParseError("bad number '" + token + "' in network file");
  }
  return v;
}

std::string NextToken(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw ParseError("truncated network file");
  return tok;
}

void ExpectToken(std::istream& is, std::string_view want) {
  const std::string got = NextToken(is);
  if (got != want) {
    throw ParseError("network file: expected '" + std::string(want) + "', got '" + got + "'");
  }
}

int ParseInt(const std::string& token) {
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0') throw ParseError("bad integer '" + token + "'");
  return static_cast<int>(v);
}

}  // namespace

std::string_view OutputActivationName(OutputActivation a) {
  switch (a) {
    case OutputActivation::kNone:
      return "none";
    case OutputActivation::kSoftmaxRows:
      return "softmax_rows";
    case OutputActivation::kSoftmaxVector:
      return "softmax_vector";
  }
  return "?";
}

DenseNetwork::DenseNetwork(std::vector<int> widths, OutputActivation output,
                           int softmax_group)
    : output_(output), softmax_group_(softmax_group) {
  if (widths.size() < 2) throw ShapeError("network needs input and output widths");
  for (int w : widths) {
    if (w < 1) throw ShapeError("layer widths must be positive");
  }
  if (output == OutputActivation::kSoftmaxRows &&
      (softmax_group < 1 || widths.back() % softmax_group != 0)) {
    throw ShapeError("softmax group size must divide the output width");
  }
  if (output != OutputActivation::kSoftmaxRows) softmax_group_ = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.push_back(DenseLayer{Matrix::Zero(widths[l + 1], widths[l]),
                                 Vector::Zero(widths[l + 1])});
  }
}

DenseNetwork DenseNetwork::GlorotUniform(std::vector<int> widths,
                                         OutputActivation output,
                                         int softmax_group, Rng& rng) {
  DenseNetwork net(std::move(widths), output, softmax_group);
  for (DenseLayer& layer : net.layers_) {
    const double r = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
        layer.weights(i, j) = rng.Uniform(-r, r);
      }
    }
  }
  return net;
}

Matrix DenseNetwork::Forward(const Matrix& inputs, GradientTape* tape) const {
  if (inputs.cols() != input_dim()) {
    throw ShapeError("input has " + std::to_string(inputs.cols()) +
                     " columns, network expects " + std::to_string(input_dim()));
  }
  if (tape != nullptr) {
    tape->net_ = this;
    tape->consumed_ = false;
    tape->layer_inputs.clear();
    tape->layer_inputs.reserve(layers_.size());
  }
  Matrix a = inputs;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    Matrix h = a * layer.weights.transpose();
    h.rowwise() += layer.bias.transpose();
    if (tape != nullptr) {
      tape->layer_inputs.push_back(std::move(a));
    }
    if (l + 1 < layers_.size()) {
      a = h.array().tanh().matrix();
    } else {
      a = std::move(h);
    }
  }
  switch (output_) {
    case OutputActivation::kNone:
      break;
    case OutputActivation::kSoftmaxRows:
      SoftmaxGroups(a, softmax_group_);
      break;
    case OutputActivation::kSoftmaxVector:
      SoftmaxGroups(a, a.cols());
      break;
  }
  if (tape != nullptr) tape->output = a;
  return a;
}

Vector DenseNetwork::Forward(const Vector& input, GradientTape* tape) const {
  return Forward(Matrix(input.transpose()), tape).row(0).transpose();
}

size_t DenseNetwork::ParameterCount() const {
  size_t count = 0;
  for (const DenseLayer& l : layers_) count += l.weights.size() + l.bias.size();
  return count;
}

std::vector<double> DenseNetwork::FlattenParameters() const {
  std::vector<double> flat;
  flat.reserve(ParameterCount());
  for (const DenseLayer& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) flat.push_back(l.weights(i, j));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias[i]);
  }
  return flat;
}

void DenseNetwork::SetParameters(const std::vector<double>& flat) {
  if (flat.size() != ParameterCount()) throw ShapeError("parameter vector has wrong length");
  size_t k = 0;
  for (DenseLayer& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) l.weights(i, j) = flat[k++];
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = flat[k++];
  }
}

bool operator==(const DenseNetwork& a, const DenseNetwork& b) {
  if (a.output_ != b.output_ || a.softmax_group_ != b.softmax_group_ ||
      a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (size_t l = 0; l < a.layers_.size(); ++l) {
    const DenseLayer& x = a.layers_[l];
    const DenseLayer& y = b.layers_[l];
    if (x.weights.rows() != y.weights.rows() || x.weights.cols() != y.weights.cols() ||
        x.weights != y.weights || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

NetworkGradients NetworkGradients::ZerosLike(const DenseNetwork& net) {
  NetworkGradients g;
  for (const DenseLayer& l : net.layers()) {
    g.layers.push_back(DenseLayer{Matrix::Zero(l.weights.rows(), l.weights.cols()),
                                  Vector::Zero(l.bias.size())});
  }
  return g;
}

NetworkGradients& NetworkGradients::operator+=(const NetworkGradients& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient shapes differ");
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

std::vector<double> NetworkGradients::Flatten() const {
  std::vector<double> flat;
  for (const DenseLayer& l : layers) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) flat.push_back(l.weights(i, j));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias[i]);
  }
  return flat;
}

NetworkGradients Backward(GradientTape& tape, const Matrix& upstream,
                          bool parameter_gradients) {
  if (!tape.recorded()) throw std::logic_error("Backward on an empty tape");
  if (tape.consumed_) throw std::logic_error("gradient tape already consumed");
  tape.consumed_ = true;
  const DenseNetwork& net = *tape.net_;
  if (upstream.rows() != tape.output.rows() || upstream.cols() != tape.output.cols()) {
    throw ShapeError("upstream gradient does not match the forward output");
  }

  Matrix delta;
  switch (net.output_activation()) {
    case OutputActivation::kNone:
      delta = upstream;
      break;
    case OutputActivation::kSoftmaxRows:
      delta = SoftmaxGroupsBackward(tape.output, upstream, net.softmax_group());
      break;
    case OutputActivation::kSoftmaxVector:
      delta = SoftmaxGroupsBackward(tape.output, upstream, tape.output.cols());
      break;
  }

  NetworkGradients grads;
  const auto& layers = net.layers();
  if (parameter_gradients) grads.layers.resize(layers.size());
  for (size_t l = layers.size(); l-- > 0;) {
    const Matrix& a = tape.layer_inputs[l];
    if (parameter_gradients) {
      grads.layers[l].weights = delta.transpose() * a;
      grads.layers[l].bias = delta.colwise().sum().transpose();
    }
    Matrix da = delta * layers[l].weights;
    if (l == 0) {
      grads.input = std::move(da);
    } else {
      // a = tanh(h) for hidden layers, so dh = da * (1 - a^2).
      delta = da.cwiseProduct((1.0 - a.array().square()).matrix());
    }
  }
  return grads;
}

void SgdStep(DenseNetwork& net, const NetworkGradients& grads, double lr) {
  auto& layers = net.layers();
  if (grads.layers.size() != layers.size()) throw ShapeError("gradient/parameter mismatch");
  for (size_t l = 0; l < layers.size(); ++l) {
    if (grads.layers[l].weights.rows() != layers[l].weights.rows() ||
        grads.layers[l].weights.cols() != layers[l].weights.cols() ||
        grads.layers[l].bias.size() != layers[l].bias.size()) {
      throw ShapeError("gradient/parameter mismatch");
    }
    layers[l].weights -= lr * grads.layers[l].weights;
    layers[l].bias -= lr * grads.layers[l].bias;
  }
}

void WriteNetworkBlock(std::ostream& os, const DenseNetwork& net) {
  os << "network " << OutputActivationName(net.output_activation()) << ' '
     << net.softmax_group() << ' ' << net.layers().size() << '\n';
  for (const DenseLayer& l : net.layers()) {
    os << "dense " << l.in_dim() << ' ' << l.out_dim() << '\n';
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) {
        os << (j ? " " : "") << FormatDouble(l.weights(i, j));
      }
      os << '\n';
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
      os << (i ? " " : "") << FormatDouble(l.bias[i]);
    }
    os << '\n';
  }
}

DenseNetwork ReadNetworkBlock(std::istream& is) {
  ExpectToken(is, "network");
  const std::string act = NextToken(is);
  OutputActivation output;
  if (act == "none") {
    output = OutputActivation::kNone;
  } else if (act == "softmax_rows") {
    output = OutputActivation::kSoftmaxRows;
  } else if (act == "softmax_vector") {
    output = OutputActivation::kSoftmaxVector;
  } else {
    throw ParseError("unknown output activation '" + act + "'");
  }
  const int group = ParseInt(NextToken(is));
  const int num_layers = ParseInt(NextToken(is));
  if (num_layers < 1) throw ParseError("network must have at least one layer");

  std::vector<DenseLayer> layers;
  std::vector<int> widths;
  for (int l = 0; l < num_layers; ++l) {
    ExpectToken(is, "dense");
    const int in = ParseInt(NextToken(is));
    const int out = ParseInt(NextToken(is));
    if (in < 1 || out < 1) throw ParseError("bad layer shape");
    if (l == 0) widths.push_back(in);
    if (widths.back() != in) throw ParseError("layer shapes do not chain");
    widths.push_back(out);
    DenseLayer layer{Matrix(out, in), Vector(out)};
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) layer.weights(i, j) = ParseDouble(NextToken(is));
    }
    for (int i = 0; i < out; ++i) layer.bias[i] = ParseDouble(NextToken(is));
    layers.push_back(std::move(layer));
  }
  DenseNetwork net(widths, output, group);
  net.layers() = std::move(layers);
  return net;
}

void ExpectMagic(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) {
    throw ParseError("missing MBRv1 header");
  }
}

void WriteNetwork(std::ostream& os, const DenseNetwork& net) {
  os << kMagic << '\n';
  WriteNetworkBlock(os, net);
}

DenseNetwork ReadNetwork(std::istream& is) {
  ExpectMagic(is);
  return ReadNetworkBlock(is);
}

}  // namespace flmarket::nn
