#pragma once

#include <random>
#include <sstream>
#include <string>

#include "sim2seg/nn/archive.hpp"
#include "sim2seg/nn/optim.hpp"

namespace sim2seg::nn {

inline void put_params(TensorArchive& ar, const std::string& prefix, const ParamList<float>& params) {
  for (const auto& p : params) ar.tensors[prefix + p.name] = p.var->value;
}

inline void get_params(const TensorArchive& ar, const std::string& prefix, const ParamList<float>& params) {
  for (const auto& p : params) {
    const auto& t = ar.get(prefix + p.name);
    if (!t.same_shape(p.var->value)) {
      throw Error(ErrorKind::kData, "checkpoint tensor " + prefix + p.name + " has shape " +
                                        shape_string(t.shape()) + ", model expects " +
                                        shape_string(p.var->value.shape()));
    }
    p.var->value = t;
  }
}

inline void put_adam(TensorArchive& ar, const std::string& prefix, const Adam<float>& opt) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ar.tensors[prefix + "m." + params[i].name] = opt.first_moments()[i];
    ar.tensors[prefix + "v." + params[i].name] = opt.second_moments()[i];
  }
  ar.tensors[prefix + "steps"] = Tensor<float>::constant({1, 1, 1, 1}, static_cast<float>(opt.steps()));
}

inline void get_adam(const TensorArchive& ar, const std::string& prefix, Adam<float>& opt) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.first_moments()[i] = ar.get(prefix + "m." + params[i].name);
    opt.second_moments()[i] = ar.get(prefix + "v." + params[i].name);
  }
  opt.set_steps(static_cast<std::int64_t>(ar.get(prefix + "steps").values()[0]));
}

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void set_rng_state(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw Error(ErrorKind::kData, "corrupt RNG state in checkpoint");
}

}  // namespace sim2seg::nn
