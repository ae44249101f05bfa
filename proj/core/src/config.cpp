#include "sgt/config.hpp"

#include <fstream>
#include <sstream>

namespace sgt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ValidationError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, val).second)
      throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

namespace {

PostOp post_from_name(const std::string& s) {
  if (s == "none") return PostOp::None;
  if (s == "relu") return PostOp::ReLU;
  if (s == "maxpool") return PostOp::MaxPool;
  if (s == "bn_relu") return PostOp::BatchNormThenReLU;
  throw ValidationError("config: unknown post op '" + s + "'");
}

}  // namespace

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig mc;
  if (auto it = kv.find("input"); it != kv.end()) {
    const auto parts = split(it->second, 'x');
    if (parts.size() != 3) throw ValidationError("config: input must be CxHxW");
    mc.in_c = std::stoi(parts[0]);
    mc.in_h = std::stoi(parts[1]);
    mc.in_w = std::stoi(parts[2]);
  }
  if (auto it = kv.find("batch"); it != kv.end()) mc.batch = std::stoi(it->second);
  if (auto it = kv.find("lr"); it != kv.end()) mc.lr = std::stof(it->second);
  if (auto it = kv.find("classes"); it != kv.end()) mc.classes = std::stoi(it->second);
  if (auto it = kv.find("loss"); it != kv.end()) {
    if (it->second == "mse")
      mc.loss = LossKind::MSE;
    else if (it->second == "softmax_ce")
      mc.loss = LossKind::SoftmaxCrossEntropy;
    else
      throw ValidationError("config: unknown loss '" + it->second + "'");
  }
  for (int i = 0;; ++i) {
    const auto it = kv.find("layer." + std::to_string(i));
    if (it == kv.end()) break;
    const auto parts = split(it->second, ',');
    if (parts.size() < 5)
      throw ValidationError("config: layer." + std::to_string(i) +
                            " needs filters,kernel,stride,pad,post");
    LayerDesc d;
    d.filters = std::stoi(parts[0]);
    d.kernel = std::stoi(parts[1]);
    d.stride = std::stoi(parts[2]);
    d.pad = std::stoi(parts[3]);
    d.post = post_from_name(parts[4]);
    if (parts.size() > 5) d.pool_window = std::stoi(parts[5]);
    if (parts.size() > 6) d.pool_stride = std::stoi(parts[6]);
    mc.layers.push_back(d);
  }
  if (mc.layers.empty())
    throw ValidationError("config: at least one layer.N entry is required");
  if (mc.batch < 2)
    throw ValidationError("config: batch must be >= 2");
  return mc;
}

}  // namespace sgt
