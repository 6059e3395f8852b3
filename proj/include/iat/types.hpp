#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace iat {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kSep = 4;
inline constexpr TokenId kNumReserved = 5;

// Token ids of one utterance; never contains BOS/EOS/SEP.
using Utterance = std::vector<TokenId>;
using Dialogue = std::vector<Utterance>;
// Oldest utterance first.
using DialogueHistory = std::vector<Utterance>;
using TokenSeq = std::vector<TokenId>;

struct Example
{
  DialogueHistory history;
  Utterance       response;

  bool operator==(Example const &) const = default;
};

// Row-major to match the checkpoint payload layout.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

} // namespace iat
