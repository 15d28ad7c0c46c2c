#include "masks.hpp"

#include <algorithm>
#include <numeric>

namespace tsppc {

const char* kind_str(Kind k) {
  switch (k) {
    case Kind::NN: return "nn";
    case Kind::PS: return "ps";
    case Kind::SP: return "sp";
    case Kind::MM: return "mm";
  }
  return "?";
}

Sparsify Sparsify::threshold(double d_t) {
  if (!(d_t > 0.0)) throw Error(ErrorCode::Argument, "threshold d_t must be > 0");
  Sparsify s;
  s.mode = Mode::Threshold;
  s.d_t = d_t;
  return s;
}

Sparsify Sparsify::knn(int k) {
  if (k < 1) throw Error(ErrorCode::Argument, "knn k must be >= 1");
  Sparsify s;
  s.mode = Mode::Knn;
  s.k = k;
  return s;
}

Sparsify Sparsify::parse(const std::string& str) {
  if (str == "dense") return dense();
  auto colon = str.find(':');
  if (colon != std::string::npos) {
    std::string head = str.substr(0, colon);
    std::string tail = str.substr(colon + 1);
    if (head == "threshold") return threshold(parse_double(tail));
    if (head == "knn") return knn(static_cast<int>(parse_int(tail)));
  }
  throw Error(ErrorCode::Argument,
              "unknown sparsify mode '" + str + "' (expected dense|threshold:<d>|knn:<k>)");
}

std::string Sparsify::str() const {
  switch (mode) {
    case Mode::Dense: return "dense";
    case Mode::Threshold: return "threshold:" + format_double(d_t);
    case Mode::Knn: return "knn:" + std::to_string(k);
  }
  return "?";
}

AttentionMasks build_masks(const Instance& inst, const Sparsify& sparsify) {
  const int n = inst.n;
  AttentionMasks masks;
  for (auto& m : masks.admit) m = BoolMat::Zero(n, n);
  masks.neighborhoods.assign(n, {});

  auto& nn = masks.admit[static_cast<int>(Kind::NN)];
  switch (sparsify.mode) {
    case Sparsify::Mode::Dense:
      nn.setConstant(1);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (j != i) masks.neighborhoods[i].push_back(j);
      break;
    case Sparsify::Mode::Threshold:
      for (int i = 0; i < n; ++i) {
        nn(i, i) = 1;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          if (inst.dist(i, j) <= sparsify.d_t) {
            nn(i, j) = 1;
            masks.neighborhoods[i].push_back(j);
          }
        }
      }
      break;
    case Sparsify::Mode::Knn: {
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) {
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        idx.erase(idx.begin() + i);  // self excluded from the candidate set
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
          double da = inst.dist(i, a), db = inst.dist(i, b);
          if (da != db) return da < db;
          return a < b;  // deterministic tie-break
        });
        int take = std::min<int>(sparsify.k, static_cast<int>(idx.size()));
        idx.resize(take);
        std::sort(idx.begin(), idx.end());
        masks.neighborhoods[i] = idx;
        nn(i, i) = 1;
        for (int j : idx) nn(i, j) = 1;
      }
      break;
    }
  }

  auto& ps = masks.admit[static_cast<int>(Kind::PS)];
  auto& sp = masks.admit[static_cast<int>(Kind::SP)];
  for (auto [i, j] : inst.pairs) {
    ps(i, j) = 1;
    sp(j, i) = 1;
  }

  auto& mm = masks.admit[static_cast<int>(Kind::MM)];
  for (const auto& chain : inst.chains)
    for (int a : chain)
      for (int b : chain)
        if (a != b) mm(a, b) = 1;

  for (int u = 0; u < kNumKinds; ++u)
    masks.any[u] = masks.admit[u].cast<int>().sum() > 0;

  return masks;
}

}  // namespace tsppc
