#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgt/trainer.hpp"

namespace sgt {

// Flat "key = value" file; '#' starts a comment, blank lines ignored.
// Throws ValidationError on malformed lines or duplicate keys.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

// Model description read from the same kv file as the node parameters:
//   input   = CxHxW
//   layer.0 = filters,kernel,stride,pad,post[,pool_window,pool_stride]
//   loss    = mse | softmax_ce
//   batch   = N
//   lr      = f
//   classes = N
// post is one of: none, relu, maxpool, bn_relu.
struct ModelConfig {
  int in_c = 3, in_h = 16, in_w = 16;
  int batch = 32;
  float lr = 0.01f;
  int classes = 10;
  LossKind loss = LossKind::MSE;
  std::vector<LayerDesc> layers;

  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

}  // namespace sgt
