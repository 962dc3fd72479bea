#include "lattle/layers.hpp"

namespace lattle {

template struct AttnLayer<float>;
template struct AttnLayer<double>;

}  // namespace lattle
