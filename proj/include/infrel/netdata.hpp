#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "infrel/errors.hpp"
#include "infrel/grid.hpp"
#include "infrel/rng.hpp"

namespace infrel {

enum class LinkKind { Binary, Count, Unit };
enum class MaskState : std::uint8_t { Train = 0, Test = 1, Unobserved = 2 };

inline const char* to_string(LinkKind k) {
  switch (k) {
    case LinkKind::Binary: return "binary";
    case LinkKind::Count: return "count";
    default: return "unit";
  }
}

inline LinkKind link_kind_from_string(const std::string& s) {
  if (s == "binary") return LinkKind::Binary;
  if (s == "count") return LinkKind::Count;
  if (s == "unit") return LinkKind::Unit;
  throw DataError("unknown link kind: " + s);
}

// Directed n x n network with a train/test/unobserved mask. The diagonal is
// always Unobserved; self-relations are not modeled.
struct NetworkData {
  int n = 0;
  LinkKind kind = LinkKind::Binary;
  bool directed = true;
  Grid<double> edges;        // n x n values
  Grid<std::uint8_t> mask;   // n x n MaskState

  MaskState state(int i, int j) const { return static_cast<MaskState>(mask(i, j)); }
  void set_state(int i, int j, MaskState s) { mask(i, j) = static_cast<std::uint8_t>(s); }

  bool is_train(int i, int j) const { return state(i, j) == MaskState::Train; }
  bool is_test(int i, int j) const { return state(i, j) == MaskState::Test; }

  int count_state(MaskState s) const {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (state(i, j) == s) ++c;
    return c;
  }

  // FNV-1a over everything the sampler may legally see. Values stored in Test
  // cells must not change this hash.
  std::uint64_t train_view_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xff;
        h *= 1099511628211ULL;
      }
    };
    mix(static_cast<std::uint64_t>(n));
    mix(static_cast<std::uint64_t>(kind));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        mix(mask(i, j));
        if (is_train(i, j)) {
          std::uint64_t bits;
          double v = edges(i, j);
          static_assert(sizeof(bits) == sizeof(v));
          std::memcpy(&bits, &v, sizeof(bits));
          mix(bits);
        }
      }
    }
    return h;
  }

  friend bool operator==(const NetworkData& a, const NetworkData& b) {
    return a.n == b.n && a.kind == b.kind && a.directed == b.directed &&
           a.edges == b.edges && a.mask == b.mask;
  }
};

// n x F binary attribute matrix; F == 0 means no metadata.
struct MetadataMatrix {
  Grid<std::uint8_t> phi;  // n x F
  std::vector<std::string> attribute_names;

  int n() const { return phi.rows(); }
  int F() const { return phi.cols(); }
};

inline MetadataMatrix empty_metadata(int n) {
  return MetadataMatrix{Grid<std::uint8_t>(n, 0), {}};
}

// Per-row partition of observed off-diagonal cells into 10 folds.
struct HoldoutPlan {
  static constexpr int kFolds = 10;
  Grid<std::int8_t> fold;  // n x n, fold id in [0,10) for observed cells, -1 otherwise
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_char(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("");
    return v;
  } catch (...) {
    throw DataError("cannot parse " + what + ": '" + s + "'");
  }
}

inline long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw DataError("");
    return v;
  } catch (...) {
    throw DataError("cannot parse " + what + ": '" + s + "'");
  }
}

}  // namespace detail

inline bool value_in_domain(LinkKind kind, double v) {
  switch (kind) {
    case LinkKind::Binary: return v == 0.0 || v == 1.0;
    case LinkKind::Count: return v >= 0.0 && v == std::floor(v);
    default: return v > 0.0 && v <= 1.0;
  }
}

struct ParseOptions {
  // Remap exact-zero unit values to 1e-6 instead of rejecting them. The
  // Beta(B,1) density is singular at 0, so this is opt-in.
  bool remap_zero_unit = false;
};

// Edge list format: whitespace-separated "src dst value" records, one per
// line, '#' starts a comment. Unlisted off-diagonal cells default to value 0
// in state Train; the diagonal is Unobserved.
inline NetworkData parse_edge_list(const std::string& text, int n, LinkKind kind,
                                   const ParseOptions& opts = {}) {
  if (n < 1) throw DataError("entity count must be positive");
  NetworkData net;
  net.n = n;
  net.kind = kind;
  net.edges = Grid<double>(n, n, 0.0);
  net.mask = Grid<std::uint8_t>(n, n, static_cast<std::uint8_t>(MaskState::Train));
  for (int i = 0; i < n; ++i) net.set_state(i, i, MaskState::Unobserved);

  Grid<std::uint8_t> seen(n, n, 0);
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    auto tok = detail::split_ws(body);
    if (tok.size() != 3)
      throw DataError("line " + std::to_string(lineno) + ": expected 'src dst value'");
    long src = detail::parse_long(tok[0], "src index");
    long dst = detail::parse_long(tok[1], "dst index");
    double v = detail::parse_double(tok[2], "edge value");
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      throw DataError("line " + std::to_string(lineno) + ": index out of range");
    if (src == dst)
      throw DataError("line " + std::to_string(lineno) + ": self-loops are not modeled");
    if (seen(static_cast<int>(src), static_cast<int>(dst)))
      throw DataError("line " + std::to_string(lineno) + ": duplicate record");
    seen(static_cast<int>(src), static_cast<int>(dst)) = 1;
    if (kind == LinkKind::Unit && v == 0.0 && opts.remap_zero_unit) v = 1e-6;
    if (!value_in_domain(kind, v))
      throw DataError("line " + std::to_string(lineno) + ": value " + tok[2] +
                      " outside the " + to_string(kind) + " domain");
    net.edges(static_cast<int>(src), static_cast<int>(dst)) = v;
  }
  return net;
}

inline std::string write_edge_list(const NetworkData& net) {
  std::ostringstream os;
  os << "# " << to_string(net.kind) << " edge list, n=" << net.n << "\n";
  char buf[64];
  for (int i = 0; i < net.n; ++i) {
    for (int j = 0; j < net.n; ++j) {
      if (i == j) continue;
      double v = net.edges(i, j);
      if (v == 0.0) continue;  // defaults are implicit
      if (net.kind == LinkKind::Unit) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << i << ' ' << j << ' ' << buf << "\n";
      } else {
        os << i << ' ' << j << ' ' << static_cast<long long>(v) << "\n";
      }
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Metadata ingestion.

// Raw attribute table: header "id,colA,colB,...", one row per entity, cells
// kept as strings until binarization rules are applied.
struct RawAttributeTable {
  std::vector<std::string> columns;        // attribute names, id column removed
  std::vector<std::vector<std::string>> cells;  // [entity][column], entity-ordered
};

inline RawAttributeTable read_attribute_csv(const std::string& text, int n) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DataError("metadata CSV: empty file");
  auto header = detail::split_char(detail::trim(line), ',');
  if (header.size() < 1) throw DataError("metadata CSV: bad header");
  RawAttributeTable t;
  for (std::size_t c = 1; c < header.size(); ++c) t.columns.push_back(detail::trim(header[c]));
  t.cells.assign(n, std::vector<std::string>(t.columns.size()));
  std::vector<bool> got(n, false);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty()) continue;
    auto f = detail::split_char(body, ',');
    if (f.size() != header.size())
      throw DataError("metadata CSV line " + std::to_string(lineno) + ": field count mismatch");
    long id = detail::parse_long(detail::trim(f[0]), "entity id");
    if (id < 0 || id >= n)
      throw DataError("metadata CSV line " + std::to_string(lineno) + ": entity id out of range");
    if (got[id]) throw DataError("metadata CSV: duplicate entity id " + std::to_string(id));
    got[id] = true;
    for (std::size_t c = 1; c < f.size(); ++c) t.cells[id][c - 1] = detail::trim(f[c]);
  }
  for (int i = 0; i < n; ++i)
    if (!got[i]) throw DataError("metadata CSV: missing row for entity " + std::to_string(i));
  return t;
}

// Already-binary metadata CSV (all cells 0/1).
inline MetadataMatrix read_binary_metadata_csv(const std::string& text, int n) {
  auto t = read_attribute_csv(text, n);
  MetadataMatrix m;
  m.attribute_names = t.columns;
  m.phi = Grid<std::uint8_t>(n, static_cast<int>(t.columns.size()), 0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < m.phi.cols(); ++c) {
      const std::string& s = t.cells[i][c];
      if (s == "0" || s.empty()) continue;
      if (s == "1") m.phi(i, c) = 1;
      else throw DataError("metadata cell (" + std::to_string(i) + "," + t.columns[c] +
                           ") is not binary: '" + s + "' (supply a rules file to binarize)");
    }
  }
  return m;
}

// Binarization rules, one per attribute column:
//   col.age = threshold:40          one column, 1 iff value > 40
//   col.age = threshold:40,50       one column per threshold
//   col.office = onehot             levels discovered from data (sorted)
//   col.office = onehot:boston,hartford   fixed level set; unseen level = error
//   col.office = indicator:boston,hartford  one column per listed level,
//                                            other values allowed (all-zero row)
struct BinarizeRule {
  enum Kind { Threshold, OneHot, Indicator } kind = Threshold;
  std::vector<double> thresholds;
  std::vector<std::string> levels;  // empty => discover (OneHot only)
};

inline std::map<std::string, BinarizeRule> parse_binarize_rules(const std::string& text) {
  std::map<std::string, BinarizeRule> rules;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw DataError("rules line " + std::to_string(lineno) + ": expected key = value");
    auto key = detail::trim(body.substr(0, eq));
    auto val = detail::trim(body.substr(eq + 1));
    if (key.rfind("col.", 0) != 0)
      throw DataError("rules line " + std::to_string(lineno) + ": key must start with 'col.'");
    auto col = key.substr(4);
    BinarizeRule rule;
    auto colon = val.find(':');
    auto head = colon == std::string::npos ? val : val.substr(0, colon);
    auto args = colon == std::string::npos ? "" : val.substr(colon + 1);
    if (head == "threshold") {
      rule.kind = BinarizeRule::Threshold;
      if (args.empty())
        throw DataError("rules line " + std::to_string(lineno) + ": threshold needs a value");
      for (auto& a : detail::split_char(args, ','))
        rule.thresholds.push_back(detail::parse_double(detail::trim(a), "threshold"));
    } else if (head == "onehot") {
      rule.kind = BinarizeRule::OneHot;
      if (!args.empty())
        for (auto& a : detail::split_char(args, ',')) rule.levels.push_back(detail::trim(a));
    } else if (head == "indicator") {
      rule.kind = BinarizeRule::Indicator;
      if (args.empty())
        throw DataError("rules line " + std::to_string(lineno) + ": indicator needs levels");
      for (auto& a : detail::split_char(args, ',')) rule.levels.push_back(detail::trim(a));
    } else {
      throw DataError("rules line " + std::to_string(lineno) + ": unknown rule '" + head + "'");
    }
    rules[col] = rule;
  }
  return rules;
}

// Missing (empty) cells binarize to all-zero, keeping the entity neutral for
// that attribute.
inline MetadataMatrix binarize_attributes(const RawAttributeTable& raw,
                                          const std::map<std::string, BinarizeRule>& rules) {
  MetadataMatrix out;
  int n = static_cast<int>(raw.cells.size());
  std::vector<std::vector<std::uint8_t>> cols;  // built column-major, transposed at the end
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    const auto& name = raw.columns[c];
    auto it = rules.find(name);
    if (it == rules.end()) throw DataError("no binarization rule for column '" + name + "'");
    const auto& rule = it->second;
    if (rule.kind == BinarizeRule::Threshold) {
      for (double t : rule.thresholds) {
        std::vector<std::uint8_t> col(n, 0);
        for (int i = 0; i < n; ++i) {
          const auto& s = raw.cells[i][c];
          if (s.empty()) continue;  // missing -> neutral
          col[i] = detail::parse_double(s, "numeric cell in column '" + name + "'") > t ? 1 : 0;
        }
        std::ostringstream nm;
        nm << name << ">" << t;
        out.attribute_names.push_back(nm.str());
        cols.push_back(std::move(col));
      }
    } else {
      std::vector<std::string> levels = rule.levels;
      if (rule.kind == BinarizeRule::OneHot) {
        if (levels.empty()) {
          std::set<std::string> uniq;
          for (int i = 0; i < n; ++i)
            if (!raw.cells[i][c].empty()) uniq.insert(raw.cells[i][c]);
          levels.assign(uniq.begin(), uniq.end());
        } else {
          for (int i = 0; i < n; ++i) {
            const auto& s = raw.cells[i][c];
            if (!s.empty() && std::find(levels.begin(), levels.end(), s) == levels.end())
              throw DataError("column '" + name + "': unseen categorical level '" + s + "'");
          }
        }
      }
      for (const auto& lvl : levels) {
        std::vector<std::uint8_t> col(n, 0);
        for (int i = 0; i < n; ++i) col[i] = raw.cells[i][c] == lvl ? 1 : 0;
        out.attribute_names.push_back(name + "=" + lvl);
        cols.push_back(std::move(col));
      }
    }
  }
  out.phi = Grid<std::uint8_t>(n, static_cast<int>(cols.size()), 0);
  for (int f = 0; f < out.phi.cols(); ++f)
    for (int i = 0; i < n; ++i) out.phi(i, f) = cols[f][i];
  return out;
}

inline std::string write_metadata_csv(const MetadataMatrix& m) {
  std::ostringstream os;
  os << "id";
  for (const auto& name : m.attribute_names) os << ',' << name;
  os << "\n";
  for (int i = 0; i < m.n(); ++i) {
    os << i;
    for (int f = 0; f < m.F(); ++f) os << ',' << static_cast<int>(m.phi(i, f));
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Cross-validation folds.

// Per-row shuffled partition of observed cells into 10 near-equal folds,
// deterministic given the seed.
inline HoldoutPlan make_cv_folds(const NetworkData& net, std::uint64_t seed) {
  HoldoutPlan plan;
  plan.seed = seed;
  plan.fold = Grid<std::int8_t>(net.n, net.n, -1);
  Rng rng(Rng::mix(seed, 0xf01d5));
  std::vector<int> cells;
  for (int i = 0; i < net.n; ++i) {
    cells.clear();
    for (int j = 0; j < net.n; ++j)
      if (net.state(i, j) != MaskState::Unobserved) cells.push_back(j);
    rng.shuffle(cells);
    for (std::size_t p = 0; p < cells.size(); ++p)
      plan.fold(i, cells[p]) = static_cast<std::int8_t>(p % HoldoutPlan::kFolds);
  }
  return plan;
}

// Marks fold f cells Test and every other observed cell Train.
inline NetworkData apply_fold(const NetworkData& net, const HoldoutPlan& plan, int f) {
  if (f < 0 || f >= HoldoutPlan::kFolds) throw DataError("fold index out of range");
  NetworkData out = net;
  for (int i = 0; i < net.n; ++i) {
    for (int j = 0; j < net.n; ++j) {
      if (net.state(i, j) == MaskState::Unobserved) continue;
      out.set_state(i, j, plan.fold(i, j) == f ? MaskState::Test : MaskState::Train);
    }
  }
  return out;
}

inline std::string write_folds_csv(const HoldoutPlan& plan) {
  std::ostringstream os;
  os << "i,j,fold\n";
  for (int i = 0; i < plan.fold.rows(); ++i)
    for (int j = 0; j < plan.fold.cols(); ++j)
      if (plan.fold(i, j) >= 0) os << i << ',' << j << ',' << int(plan.fold(i, j)) << "\n";
  return os.str();
}

}  // namespace infrel
