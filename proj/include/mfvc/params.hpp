/* Copyright 2026 The MFVC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <string>
#include <vector>

#include "mfvc/ops.hpp"
#include "mfvc/weights.hpp"

namespace mfvc {

// A trainable tensor inside a model, addressed by its weights-file name.
template <typename T>
struct ParamRef {
  std::string name;
  Var<T>* var;
};

template <typename T>
void add_layer_params(std::vector<ParamRef<T>>& out, const std::string& prefix, ConvLayer<T>& layer) {
  out.push_back({prefix + ".kernel", &layer.kernel});
  out.push_back({prefix + ".bias", &layer.bias});
}

// Rebuild every parameter as a graph leaf that does (or does not) collect
// gradients. Frozen models then record no graph at all.
template <typename T>
void set_trainable(const std::vector<ParamRef<T>>& params, bool trainable) {
  for (const auto& p : params) {
    Tensor<T> v = p.var->value();
    *p.var = trainable ? Var<T>::parameter(std::move(v)) : Var<T>::constant(std::move(v));
  }
}

template <typename T>
void export_params(const std::vector<ParamRef<T>>& params, WeightsFile& file) {
  for (const auto& p : params) file.put(p.name, p.var->value().template cast<float>());
}

// Shapes must match the model's own; parameters keep their trainable state.
template <typename T>
void import_params(const std::vector<ParamRef<T>>& params, const WeightsFile& file) {
  for (const auto& p : params) {
    const Tensor<float>& src = file.get(p.name);
    if (src.shape() != p.var->shape()) {
      throw ConfigError("weights: tensor '" + p.name + "' has shape " + src.shape().str() + ", model expects " +
                        p.var->shape().str());
    }
    p.var->mutable_value() = src.template cast<T>();
  }
}

// Small integer/real model settings travel inside the weights file as a
// (1, 1, 1, k) tensor.
inline Tensor<float> pack_values(const std::vector<double>& values) {
  Tensor<float> t(Shape{1, 1, 1, static_cast<int>(values.size())});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<float>(values[i]);
  return t;
}

inline std::vector<double> unpack_values(const Tensor<float>& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

}  // namespace mfvc
