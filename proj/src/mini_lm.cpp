#include "lattle/mini_lm.hpp"

namespace lattle {

template struct MiniLm<float>;
template struct MiniLm<double>;
template std::vector<ExtractedAttention<float>> extract_attention(const MiniLm<float>&,
                                                                  const std::vector<int>&);
template std::vector<ExtractedAttention<double>> extract_attention(const MiniLm<double>&,
                                                                   const std::vector<int>&);

}  // namespace lattle
