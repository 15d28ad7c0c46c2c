#include "instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include "rng.hpp"

namespace tsppc {

ChainProfile parse_chain_profile(const std::string& s) {
  if (s == "pairs") return ChainProfile::PairsOnly;
  if (s == "mixed") return ChainProfile::Mixed;
  throw Error(ErrorCode::Argument, "unknown chain profile '" + s + "' (expected pairs|mixed)");
}

std::string chain_profile_str(ChainProfile p) {
  return p == ChainProfile::PairsOnly ? "pairs" : "mixed";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

void Instance::finalize() {
  dist.resize(n, n);
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double dx = coords[i].x - coords[j].x;
      double dy = coords[i].y - coords[j].y;
      double d = std::sqrt(dx * dx + dy * dy);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  chain_id.assign(n, -1);
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (int v : chains[c])
      if (v >= 0 && v < n) chain_id[v] = static_cast<int>(c);
  preds.assign(n, {});
  succs.assign(n, {});
  for (auto [i, j] : pairs) {
    if (i >= 0 && i < n && j >= 0 && j < n) {
      succs[i].push_back(j);
      preds[j].push_back(i);
    }
  }
}

std::vector<std::pair<int, int>> pairs_of_chains(const std::vector<std::vector<int>>& chains) {
  std::vector<std::pair<int, int>> out;
  for (const auto& c : chains)
    for (std::size_t t = 0; t + 1 < c.size(); ++t) out.emplace_back(c[t], c[t + 1]);
  std::sort(out.begin(), out.end());
  return out;
}

Instance generate_instance(int n, double constraint_ratio, ChainProfile profile,
                           std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::Argument, "instance size must be >= 2");
  if (constraint_ratio < 0.0 || constraint_ratio >= 1.0)
    throw Error(ErrorCode::Argument, "constraint ratio must lie in [0,1)");

  Rng rng(seed);
  Instance inst;
  inst.n = n;
  inst.start = 0;
  inst.coords.resize(n);
  for (int i = 0; i < n; ++i) {
    inst.coords[i].x = rng.uniform01();
    inst.coords[i].y = rng.uniform01();
  }

  int m = static_cast<int>(std::floor(constraint_ratio * n));
  int avail = n - 1;  // non-start nodes

  // A chain of length L contributes L-1 pairs. With chain lengths in {2,3},
  // `triples` chains of length 3 and the rest of length 2, realizing m pairs
  // consumes 2m - triples nodes.
  int triples = 0;
  if (m > 0) {
    if (profile == ChainProfile::PairsOnly) {
      if (2 * m > avail)
        throw Error(ErrorCode::Argument,
                    "constraint ratio too large: " + std::to_string(m) +
                        " pairs need " + std::to_string(2 * m) +
                        " chain nodes but only " + std::to_string(avail) +
                        " non-start nodes exist");
    } else {
      int lo = std::max(0, 2 * m - avail);
      int hi = m / 2;
      if (lo > hi)
        throw Error(ErrorCode::Argument,
                    "constraint ratio too large: " + std::to_string(m) +
                        " pairs cannot be packed into " + std::to_string(avail) +
                        " non-start nodes with chain lengths 2 and 3");
      triples = static_cast<int>(rng.uniform_int(lo, hi));
    }
    int doubles = m - 2 * triples;

    std::vector<int> nodes(avail);
    for (int i = 0; i < avail; ++i) nodes[i] = i + 1;
    rng.shuffle(nodes);

    std::size_t pos = 0;
    for (int c = 0; c < triples; ++c) {
      inst.chains.push_back({nodes[pos], nodes[pos + 1], nodes[pos + 2]});
      pos += 3;
    }
    for (int c = 0; c < doubles; ++c) {
      inst.chains.push_back({nodes[pos], nodes[pos + 1]});
      pos += 2;
    }
  }

  inst.pairs = pairs_of_chains(inst.chains);
  inst.finalize();
  return inst;
}

std::string ValidationReport::str() const {
  if (ok()) return "ok";
  std::string out;
  for (const auto& v : violations) {
    out += v;
    out += '\n';
  }
  return out;
}

namespace {

bool has_cycle(int n, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<std::vector<int>> adj(n);
  std::vector<int> indeg(n, 0);
  for (auto [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= n) continue;
    adj[i].push_back(j);
    ++indeg[j];
  }
  std::vector<int> queue;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) queue.push_back(v);
  int seen = 0;
  while (!queue.empty()) {
    int v = queue.back();
    queue.pop_back();
    ++seen;
    for (int w : adj[v])
      if (--indeg[w] == 0) queue.push_back(w);
  }
  return seen != n;
}

}  // namespace

ValidationReport validate_instance(const Instance& inst) {
  ValidationReport rep;
  auto add = [&rep](const std::string& v) { rep.violations.push_back(v); };

  if (inst.n < 2) add("node count must be >= 2");
  if (static_cast<int>(inst.coords.size()) != inst.n)
    add("coords size does not match node count");
  if (inst.start < 0 || inst.start >= inst.n) add("start node out of range");

  for (std::size_t i = 0; i < inst.coords.size(); ++i) {
    const auto& p = inst.coords[i];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      add("coordinate outside unit square at node " + std::to_string(i));
      break;
    }
  }

  std::set<std::pair<int, int>> pair_set;
  for (auto [i, j] : inst.pairs) {
    if (i < 0 || i >= inst.n || j < 0 || j >= inst.n) {
      add("pair (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
      continue;
    }
    if (i == j) add("self-precedence at node " + std::to_string(i));
    if (i == inst.start || j == inst.start)
      add("start node participates in pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    if (!pair_set.insert({i, j}).second)
      add("duplicate pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
  }
  if (has_cycle(inst.n, inst.pairs)) add("precedence cycle");

  std::vector<int> membership(std::max(inst.n, 1), 0);
  for (const auto& c : inst.chains) {
    if (c.size() < 2) add("chain shorter than 2 nodes");
    for (int v : c) {
      if (v < 0 || v >= inst.n) {
        add("chain node " + std::to_string(v) + " out of range");
        continue;
      }
      if (v == inst.start) add("start node appears in a chain");
      if (++membership[v] == 2) add("node " + std::to_string(v) + " belongs to multiple chains");
    }
  }

  auto derived = pairs_of_chains(inst.chains);
  auto sorted = inst.pairs;
  std::sort(sorted.begin(), sorted.end());
  if (derived != sorted) add("pair set does not equal the consecutive pairs of the chains");

  if (inst.dist.rows() != inst.n || inst.dist.cols() != inst.n) {
    add("distance matrix has wrong shape");
  } else {
    for (int i = 0; i < inst.n && rep.ok(); ++i)
      for (int j = 0; j < inst.n; ++j) {
        double dx = inst.coords[i].x - inst.coords[j].x;
        double dy = inst.coords[i].y - inst.coords[j].y;
        if (inst.dist(i, j) != std::sqrt(dx * dx + dy * dy)) {
          add("distance matrix does not match coordinates");
          i = inst.n;
          break;
        }
      }
  }
  return rep;
}

namespace {

void check_permutation(const Instance& inst, const Tour& tour, bool check_start) {
  if (static_cast<int>(tour.order.size()) != inst.n)
    throw Error(ErrorCode::Invalid, "invalid tour: visits " + std::to_string(tour.order.size()) +
                                        " of " + std::to_string(inst.n) + " nodes");
  std::vector<uint8_t> seen(inst.n, 0);
  for (int v : tour.order) {
    if (v < 0 || v >= inst.n || seen[v])
      throw Error(ErrorCode::Invalid, "invalid tour: not a permutation of the nodes");
    seen[v] = 1;
  }
  if (check_start && tour.order[0] != inst.start)
    throw Error(ErrorCode::Invalid, "invalid tour: does not begin at the start node");
}

}  // namespace

double tour_length(const Instance& inst, const Tour& tour) {
  check_permutation(inst, tour, /*check_start=*/true);
  double total = 0.0;
  for (int t = 0; t + 1 < inst.n; ++t) total += inst.dist(tour.order[t], tour.order[t + 1]);
  total += inst.dist(tour.order[inst.n - 1], tour.order[0]);
  return total;
}

bool is_feasible(const Instance& inst, const Tour& tour) {
  check_permutation(inst, tour, /*check_start=*/false);
  if (tour.order[0] != inst.start) return false;
  std::vector<int> position(inst.n);
  for (int t = 0; t < inst.n; ++t) position[tour.order[t]] = t;
  for (auto [i, j] : inst.pairs)
    if (position[i] >= position[j]) return false;
  return true;
}

// ---- text formats ----

namespace {

constexpr const char* kInstanceMagic = "tsppc-instance v1";
constexpr const char* kDatasetMagic = "tsppc-dataset v1";

class LineReader {
public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::string next() {
    std::string line;
    if (!std::getline(is_, line))
      throw Error(ErrorCode::Format, "unexpected end of file at line " + std::to_string(lineno_ + 1));
    ++lineno_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  std::string expect_field(const std::string& key) {
    std::string line = next();
    if (line.rfind(key + " ", 0) != 0)
      throw Error(ErrorCode::Format,
                  "expected '" + key + "' at line " + std::to_string(lineno_) + ", got '" + line + "'");
    return line.substr(key.size() + 1);
  }

  void expect_line(const std::string& want) {
    std::string line = next();
    if (line != want)
      throw Error(ErrorCode::Format,
                  "expected '" + want + "' at line " + std::to_string(lineno_) + ", got '" + line + "'");
  }

  int lineno() const { return lineno_; }

private:
  std::istream& is_;
  int lineno_ = 0;
};

std::vector<int> parse_int_row(const std::string& line) {
  std::vector<int> out;
  for (const auto& tok : split(line, ' '))
    if (!tok.empty()) out.push_back(static_cast<int>(parse_int(tok)));
  return out;
}

}  // namespace

void save_instance(const Instance& inst, std::ostream& os) {
  os << kInstanceMagic << '\n';
  os << "id " << inst.id << '\n';
  os << "n " << inst.n << '\n';
  os << "start " << inst.start << '\n';
  os << "coords " << inst.n << '\n';
  for (const auto& p : inst.coords)
    os << format_double(p.x) << ' ' << format_double(p.y) << '\n';
  os << "chains " << inst.chains.size() << '\n';
  for (const auto& c : inst.chains) {
    for (std::size_t t = 0; t < c.size(); ++t) os << (t ? " " : "") << c[t];
    os << '\n';
  }
  auto sorted = inst.pairs;
  std::sort(sorted.begin(), sorted.end());
  os << "pairs " << sorted.size() << '\n';
  for (auto [i, j] : sorted) os << i << ' ' << j << '\n';
  os << "end\n";
}

Instance load_instance(std::istream& is) {
  LineReader r(is);
  r.expect_line(kInstanceMagic);
  Instance inst;
  inst.id = parse_int(r.expect_field("id"));
  inst.n = static_cast<int>(parse_int(r.expect_field("n")));
  if (inst.n < 2) throw Error(ErrorCode::Format, "instance has fewer than 2 nodes");
  inst.start = static_cast<int>(parse_int(r.expect_field("start")));
  int ncoords = static_cast<int>(parse_int(r.expect_field("coords")));
  if (ncoords != inst.n) throw Error(ErrorCode::Format, "coords count does not match n");
  inst.coords.resize(inst.n);
  for (int i = 0; i < inst.n; ++i) {
    auto toks = split(r.next(), ' ');
    if (toks.size() != 2) throw Error(ErrorCode::Format, "coordinate row must have two values");
    inst.coords[i].x = parse_double(toks[0]);
    inst.coords[i].y = parse_double(toks[1]);
  }
  int nchains = static_cast<int>(parse_int(r.expect_field("chains")));
  for (int c = 0; c < nchains; ++c) {
    auto row = parse_int_row(r.next());
    if (row.size() < 2) throw Error(ErrorCode::Format, "chain row must list at least two nodes");
    inst.chains.push_back(std::move(row));
  }
  int npairs = static_cast<int>(parse_int(r.expect_field("pairs")));
  for (int p = 0; p < npairs; ++p) {
    auto row = parse_int_row(r.next());
    if (row.size() != 2) throw Error(ErrorCode::Format, "pair row must have two nodes");
    inst.pairs.emplace_back(row[0], row[1]);
  }
  r.expect_line("end");

  // The pairs section is redundant; reject files where it disagrees with the
  // chains section.
  auto derived = pairs_of_chains(inst.chains);
  auto sorted = inst.pairs;
  std::sort(sorted.begin(), sorted.end());
  if (derived != sorted)
    throw Error(ErrorCode::Format, "pairs section does not match the chains section");
  inst.pairs = std::move(sorted);
  inst.finalize();
  return inst;
}

void save_instance_file(const Instance& inst, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  save_instance(inst, os);
  if (!os) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

Instance load_instance_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return load_instance(is);
}

void save_dataset_file(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  os << kDatasetMagic << '\n';
  os << "count " << instances.size() << '\n';
  for (const auto& inst : instances) os << "id " << inst.id << '\n';
  for (const auto& inst : instances) save_instance(inst, os);
  os << "end\n";
  if (!os) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

std::vector<Instance> load_dataset_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  LineReader r(is);
  r.expect_line(kDatasetMagic);
  int count = static_cast<int>(parse_int(r.expect_field("count")));
  std::vector<std::int64_t> ids(count);
  for (int k = 0; k < count; ++k) ids[k] = parse_int(r.expect_field("id"));
  std::vector<Instance> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    out.push_back(load_instance(is));
    if (out.back().id != ids[k])
      throw Error(ErrorCode::Format, "dataset index id mismatch at position " + std::to_string(k));
  }
  LineReader tail(is);
  tail.expect_line("end");
  return out;
}

void generate_dataset_file(int n, int count, double ratio, ChainProfile profile,
                           std::uint64_t seed, const std::string& path) {
  if (count < 0) throw Error(ErrorCode::Argument, "dataset count must be >= 0");
  std::vector<Instance> instances;
  instances.reserve(count);
  for (int k = 0; k < count; ++k) {
    Instance inst = generate_instance(n, ratio, profile, Rng::derive(seed, k));
    inst.id = k;
    instances.push_back(std::move(inst));
  }
  save_dataset_file(instances, path);
}

}  // namespace tsppc
