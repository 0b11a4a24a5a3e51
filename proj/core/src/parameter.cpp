#include "dualcap/parameter.hpp"

#include "dualcap/digest.hpp"

namespace dualcap {

void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

std::string fingerprint(const std::vector<const Parameter*>& params) {
  Sha256 sha;
  for (const Parameter* p : params) {
    sha.update(p->name);
    sha.update_i64(p->value.rows());
    sha.update_i64(p->value.cols());
    sha.update_f32(std::span(p->value.data(), static_cast<std::size_t>(p->value.size())));
  }
  return sha.hex_digest();
}

}  // namespace dualcap
