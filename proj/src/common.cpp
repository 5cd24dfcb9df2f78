#include "mtmatch/common.hpp"

namespace mtmatch {

std::vector<Pair> all_pairs(int num_treatments) {
  std::vector<Pair> pairs;
  for (int j = 0; j < num_treatments; ++j) {
    for (int k = j + 1; k < num_treatments; ++k) pairs.push_back({j, k});
  }
  return pairs;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

}  // namespace mtmatch
