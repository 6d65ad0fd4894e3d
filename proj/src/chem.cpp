#include "hifdta/chem.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include "hifdta/errors.hpp"
#include "hifdta/rng.hpp"

namespace hifdta::chem {

std::size_t MolGraph::bond_between(std::size_t u, std::size_t v) const {
  for (std::size_t b : adjacency[u])
    if (bonds[b].other(u) == v) return b;
  return npos;
}

namespace {

using Kind = ParseError::Kind;

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

bool is_element(std::string_view s) { return std::find(kElements.begin(), kElements.end(), s) != kElements.end(); }

// Lowercase symbols allowed for aromatic atoms inside brackets.
constexpr std::array<std::string_view, 9> kAromaticBracket = {"se", "as", "te", "c", "n", "o", "p", "s", "b"};

const std::vector<int>& default_valences(const std::string& e) {
  static const std::map<std::string, std::vector<int>> table = {
      {"B", {3}}, {"C", {4}},     {"N", {3, 5}}, {"O", {2}}, {"P", {3, 5}}, {"S", {2, 4, 6}},
      {"F", {1}}, {"Cl", {1}},    {"Br", {1}},   {"I", {1}}, {"Se", {2, 4, 6}}};
  static const std::vector<int> none;
  auto it = table.find(e);
  return it == table.end() ? none : it->second;
}

int bond_valence(BondOrder o) {
  switch (o) {
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    default: return 1;
  }
}

std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

struct RingOpen {
  std::size_t atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  MolGraph run() {
    if (s_.empty()) throw ParseError(Kind::UnknownToken, 0, "empty SMILES");
    while (i_ < s_.size()) {
      const char ch = s_[i_];
      if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') break;
      if (ch == '(') {
        if (prev_ == MolGraph::npos) throw ParseError(Kind::UnmatchedParenthesis, i_, "branch without a preceding atom");
        if (pending_) throw ParseError(Kind::UnknownToken, i_, "bond symbol before '('");
        branches_.push_back({prev_, i_});
        ++i_;
      } else if (ch == ')') {
        if (branches_.empty()) throw ParseError(Kind::UnmatchedParenthesis, i_, "unmatched ')'");
        if (pending_) throw ParseError(Kind::UnknownToken, pending_offset_, "dangling bond symbol");
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++i_;
      } else if (ch == '-' || ch == '=' || ch == '#' || ch == ':' || ch == '/' || ch == '\\') {
        if (pending_) throw ParseError(Kind::UnknownToken, i_, "consecutive bond symbols");
        pending_ = ch == '=' ? BondOrder::Double : ch == '#' ? BondOrder::Triple
                 : ch == ':' ? BondOrder::Aromatic : BondOrder::Single;
        pending_offset_ = i_;
        ++i_;
      } else if (ch == '.') {
        if (pending_) throw ParseError(Kind::UnknownToken, pending_offset_, "dangling bond symbol");
        prev_ = MolGraph::npos;
        ++i_;
      } else if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '%') {
        ring_closure();
      } else if (ch == '[') {
        bracket_atom();
      } else {
        organic_atom();
      }
    }
    if (pending_) throw ParseError(Kind::UnknownToken, pending_offset_, "dangling bond symbol");
    if (!branches_.empty()) throw ParseError(Kind::UnmatchedParenthesis, branches_.back().second, "unclosed '('");
    if (!rings_.empty()) {
      std::size_t first = s_.size();
      for (const auto& [digit, open] : rings_) first = std::min(first, open.offset);
      throw ParseError(Kind::UnmatchedRingClosure, first, "unclosed ring bond");
    }
    finish();
    return std::move(g_);
  }

 private:
  void add_bond(std::size_t u, std::size_t v, BondOrder order, std::size_t offset) {
    if (u == v) throw ParseError(Kind::UnmatchedRingClosure, offset, "ring closure bonds an atom to itself");
    if (g_.bond_between(u, v) != MolGraph::npos)
      throw ParseError(Kind::UnmatchedRingClosure, offset, "ring closure duplicates an existing bond");
    g_.bonds.push_back({u, v, order, false});
    g_.adjacency[u].push_back(g_.bonds.size() - 1);
    g_.adjacency[v].push_back(g_.bonds.size() - 1);
  }

  BondOrder default_order(std::size_t u, std::size_t v) const {
    return g_.atoms[u].aromatic && g_.atoms[v].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  }

  void push_atom(Atom atom) {
    g_.atoms.push_back(std::move(atom));
    g_.adjacency.emplace_back();
    const std::size_t idx = g_.atoms.size() - 1;
    if (prev_ != MolGraph::npos) {
      add_bond(prev_, idx, pending_.value_or(default_order(prev_, idx)), g_.atoms[idx].offset);
    } else if (pending_) {
      throw ParseError(Kind::UnknownToken, pending_offset_, "bond symbol without a preceding atom");
    }
    pending_.reset();
    prev_ = idx;
  }

  void organic_atom() {
    const std::size_t start = i_;
    const char ch = s_[i_];
    Atom atom;
    atom.offset = start;
    auto next_is = [&](char c) { return i_ + 1 < s_.size() && s_[i_ + 1] == c; };
    switch (ch) {
      case 'C':
        atom.element = next_is('l') ? "Cl" : "C";
        break;
      case 'B':
        atom.element = next_is('r') ? "Br" : "B";
        break;
      case 'N': case 'O': case 'P': case 'S': case 'F': case 'I':
        atom.element = std::string(1, ch);
        break;
      case 'b': case 'c': case 'n': case 'o': case 'p': case 's':
        atom.element = capitalize(std::string_view(&s_[i_], 1));
        atom.aromatic = true;
        break;
      case '*':
        atom.element = "*";
        break;
      default:
        throw ParseError(Kind::UnknownToken, start, std::string("unknown token '") + ch + "'");
    }
    i_ += atom.element.size() == 2 ? 2 : 1;
    push_atom(std::move(atom));
  }

  void bracket_atom() {
    const std::size_t start = i_;
    const std::size_t close = s_.find(']', i_);
    if (close == std::string_view::npos) throw ParseError(Kind::UnknownToken, start, "unterminated bracket atom");
    std::size_t j = i_ + 1;
    auto at = [&](std::size_t k) { return k < close ? s_[k] : '\0'; };
    while (std::isdigit(static_cast<unsigned char>(at(j)))) ++j;  // isotope
    Atom atom;
    atom.bracket = true;
    atom.offset = start;
    if (at(j) == '*') {
      atom.element = "*";
      ++j;
    } else if (std::islower(static_cast<unsigned char>(at(j)))) {
      bool found = false;
      for (auto sym : kAromaticBracket) {
        if (s_.substr(j, sym.size()) == sym && j + sym.size() <= close) {
          atom.element = capitalize(sym);
          atom.aromatic = true;
          j += sym.size();
          found = true;
          break;
        }
      }
      if (!found) throw ParseError(Kind::UnknownToken, j, "unknown aromatic element in bracket");
    } else if (std::isupper(static_cast<unsigned char>(at(j)))) {
      std::string two{at(j), at(j + 1)};
      if (std::islower(static_cast<unsigned char>(at(j + 1))) && is_element(two)) {
        atom.element = two;
        j += 2;
      } else if (is_element(std::string(1, at(j)))) {
        atom.element = std::string(1, at(j));
        j += 1;
      } else {
        throw ParseError(Kind::UnknownToken, j, "unknown element in bracket");
      }
    } else {
      throw ParseError(Kind::UnknownToken, j, "missing element in bracket");
    }
    // Chirality: @, @@, @TH1, @SP2, @OH12 ...
    if (at(j) == '@') {
      while (at(j) == '@') ++j;
      if (std::isupper(static_cast<unsigned char>(at(j))) && std::isupper(static_cast<unsigned char>(at(j + 1)))) {
        j += 2;
        while (std::isdigit(static_cast<unsigned char>(at(j)))) ++j;
      }
    }
    if (at(j) == 'H') {
      ++j;
      int h = 1;
      if (std::isdigit(static_cast<unsigned char>(at(j)))) {
        h = at(j) - '0';
        ++j;
      }
      atom.explicit_h = h;
    }
    if (at(j) == '+' || at(j) == '-') {
      const char sign = at(j);
      int magnitude = 1;
      ++j;
      if (std::isdigit(static_cast<unsigned char>(at(j)))) {
        magnitude = 0;
        while (std::isdigit(static_cast<unsigned char>(at(j)))) magnitude = magnitude * 10 + (at(j++) - '0');
      } else {
        while (at(j) == sign) {
          ++magnitude;
          ++j;
        }
      }
      atom.charge = sign == '+' ? magnitude : -magnitude;
    }
    if (at(j) == ':') {
      ++j;
      while (std::isdigit(static_cast<unsigned char>(at(j)))) ++j;
    }
    if (j != close) throw ParseError(Kind::UnknownToken, j, "unexpected character in bracket atom");
    i_ = close + 1;
    push_atom(std::move(atom));
  }

  void ring_closure() {
    const std::size_t start = i_;
    int digit;
    if (s_[i_] == '%') {
      if (i_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[i_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s_[i_ + 2])))
        throw ParseError(Kind::UnknownToken, start, "'%' must be followed by two digits");
      digit = (s_[i_ + 1] - '0') * 10 + (s_[i_ + 2] - '0');
      i_ += 3;
    } else {
      digit = s_[i_] - '0';
      i_ += 1;
    }
    if (prev_ == MolGraph::npos) throw ParseError(Kind::UnmatchedRingClosure, start, "ring closure without an atom");
    auto it = rings_.find(digit);
    if (it == rings_.end()) {
      rings_[digit] = {prev_, pending_, start};
    } else {
      const RingOpen open = it->second;
      rings_.erase(it);
      if (pending_ && open.order && *pending_ != *open.order)
        throw ParseError(Kind::UnmatchedRingClosure, start, "conflicting ring bond orders");
      const BondOrder order = pending_ ? *pending_ : open.order ? *open.order : default_order(open.atom, prev_);
      add_bond(open.atom, prev_, order, start);
    }
    pending_.reset();
  }

  void finish() {
    const std::size_t n = g_.atoms.size();
    for (std::size_t v = 0; v < n; ++v) {
      Atom& atom = g_.atoms[v];
      atom.degree = g_.adjacency[v].size();
      if (atom.bracket || atom.element == "*") continue;
      int raw = 0;
      for (std::size_t b : g_.adjacency[v]) raw += bond_valence(g_.bonds[b].order);
      const auto& allowed = default_valences(atom.element);
      if (allowed.empty()) continue;
      if (raw > allowed.back())
        throw ParseError(Kind::ValenceOverflow, atom.offset,
                         "valence " + std::to_string(raw) + " exceeds the maximum for " + atom.element);
      int effective = raw;
      if (atom.aromatic) {
        const std::string& e = atom.element;
        if (e == "O" || e == "S" || e == "Se" || (e == "N" && atom.degree >= 3)) continue;
        effective = raw + 1;  // the ring pi bond
      }
      auto target = std::find_if(allowed.begin(), allowed.end(), [&](int val) { return val >= effective; });
      atom.implicit_h = target == allowed.end() ? 0 : *target - effective;
    }
    mark_ring_bonds();
  }

  // A bond lies on a ring exactly when it is not a bridge.
  void mark_ring_bonds() {
    const std::size_t n = g_.atoms.size();
    std::vector<std::size_t> tin(n, MolGraph::npos), low(n, 0);
    std::size_t timer = 0;
    for (std::size_t root = 0; root < n; ++root) {
      if (tin[root] != MolGraph::npos) continue;
      // (vertex, parent bond, next adjacency slot)
      std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> stack{{root, MolGraph::npos, 0}};
      tin[root] = low[root] = timer++;
      while (!stack.empty()) {
        auto& [v, parent_bond, slot] = stack.back();
        if (slot < g_.adjacency[v].size()) {
          const std::size_t b = g_.adjacency[v][slot++];
          if (b == parent_bond) continue;
          const std::size_t u = g_.bonds[b].other(v);
          if (tin[u] == MolGraph::npos) {
            tin[u] = low[u] = timer++;
            stack.emplace_back(u, b, 0);
          } else {
            low[v] = std::min(low[v], tin[u]);
            g_.bonds[b].in_ring = true;
          }
        } else {
          const std::size_t done = v, via = parent_bond;
          stack.pop_back();
          if (!stack.empty()) {
            const std::size_t parent = std::get<0>(stack.back());
            low[parent] = std::min(low[parent], low[done]);
            g_.bonds[via].in_ring = low[done] <= tin[parent];
          }
        }
      }
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  MolGraph g_;
  std::size_t prev_ = MolGraph::npos;
  std::optional<BondOrder> pending_;
  std::size_t pending_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;
  std::map<int, RingOpen> rings_;
};

// Per-atom label used by the writer's ordering and by isomorphism pruning.
std::uint64_t atom_label(const MolGraph& g, std::size_t v) {
  const Atom& a = g.atoms[v];
  std::string key = a.element;
  key += a.aromatic ? 'a' : 'A';
  key += std::to_string(a.charge) + "/" + std::to_string(a.total_h()) + "/" + std::to_string(a.degree) + "/";
  std::vector<int> orders;
  for (std::size_t b : g.adjacency[v]) orders.push_back(static_cast<int>(g.bonds[b].order));
  std::sort(orders.begin(), orders.end());
  for (int o : orders) key += static_cast<char>('0' + o);
  return stable_hash(key.data(), key.size());
}

// Labels refined by a few rounds of neighbourhood hashing.
std::vector<std::uint64_t> refined_labels(const MolGraph& g, int rounds = 3) {
  const std::size_t n = g.num_atoms();
  std::vector<std::uint64_t> lab(n);
  for (std::size_t v = 0; v < n; ++v) lab[v] = atom_label(g, v);
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::uint64_t> nb;
      for (std::size_t b : g.adjacency[v])
        nb.push_back(lab[g.bonds[b].other(v)] * 31 + static_cast<std::uint64_t>(g.bonds[b].order));
      std::sort(nb.begin(), nb.end());
      std::uint64_t h = stable_hash(&lab[v], sizeof(std::uint64_t));
      for (auto x : nb) h = stable_hash(&x, sizeof(x), h);
      next[v] = h;
    }
    lab = std::move(next);
  }
  return lab;
}

std::string atom_text(const Atom& a) {
  std::string sym = a.element;
  if (a.aromatic) {
    for (auto& c : sym) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (!a.bracket) return sym;
  std::string out = "[" + sym;
  if (a.explicit_h > 0) out += "H" + (a.explicit_h > 1 ? std::to_string(a.explicit_h) : std::string());
  if (a.charge != 0) {
    out += a.charge > 0 ? '+' : '-';
    if (std::abs(a.charge) > 1) out += std::to_string(std::abs(a.charge));
  }
  return out + "]";
}

std::string bond_text(const MolGraph& g, const Bond& b) {
  const bool both_aromatic = g.atoms[b.a].aromatic && g.atoms[b.b].aromatic;
  switch (b.order) {
    case BondOrder::Single: return both_aromatic ? "-" : "";
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic: return both_aromatic ? "" : ":";
  }
  return "";
}

std::string ring_digit(int d) { return d < 10 ? std::to_string(d) : "%" + std::to_string(d); }

}  // namespace

MolGraph parse_smiles(std::string_view smiles) { return Parser(smiles).run(); }

std::string write_smiles(const MolGraph& g) {
  const std::size_t n = g.num_atoms();
  const auto labels = refined_labels(g);
  auto less = [&](std::size_t x, std::size_t y) { return labels[x] != labels[y] ? labels[x] < labels[y] : x < y; };

  // Pass 1: DFS tree with ordered children; remaining bonds become ring closures.
  std::vector<bool> seen(n, false), tree_bond(g.num_bonds(), false);
  std::vector<std::vector<std::size_t>> children(n);  // tree bond ids
  std::vector<std::size_t> roots;
  std::vector<std::size_t> preorder(n, 0);
  std::size_t visit_count = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t v = 0; v < n; ++v) order[v] = v;
  std::sort(order.begin(), order.end(), less);
  for (std::size_t root : order) {
    if (seen[root]) continue;
    roots.push_back(root);
    std::function<void(std::size_t)> dfs = [&](std::size_t v) {
      seen[v] = true;
      preorder[v] = visit_count++;
      std::vector<std::size_t> nb = g.adjacency[v];
      std::sort(nb.begin(), nb.end(), [&](std::size_t b1, std::size_t b2) { return less(g.bonds[b1].other(v), g.bonds[b2].other(v)); });
      for (std::size_t b : nb) {
        const std::size_t u = g.bonds[b].other(v);
        if (seen[u]) continue;
        tree_bond[b] = true;
        children[v].push_back(b);
        dfs(u);
      }
    };
    dfs(root);
  }

  // Pass 2: emit.
  std::string out;
  std::vector<int> open_digit(g.num_bonds(), -1);
  std::set<int> free_digits;
  for (int d = 1; d < 100; ++d) free_digits.insert(d);
  std::function<void(std::size_t)> emit = [&](std::size_t v) {
    out += atom_text(g.atoms[v]);
    std::vector<std::size_t> closures;
    for (std::size_t b : g.adjacency[v])
      if (!tree_bond[b]) closures.push_back(b);
    // Pending closures first, then new ones by the partner's visit order.
    std::sort(closures.begin(), closures.end(), [&](std::size_t b1, std::size_t b2) {
      const bool o1 = open_digit[b1] >= 0, o2 = open_digit[b2] >= 0;
      if (o1 != o2) return o1;
      if (o1) return open_digit[b1] < open_digit[b2];
      return preorder[g.bonds[b1].other(v)] < preorder[g.bonds[b2].other(v)];
    });
    for (std::size_t b : closures) {
      if (open_digit[b] < 0) {
        const int d = *free_digits.begin();
        free_digits.erase(free_digits.begin());
        open_digit[b] = d;
        out += bond_text(g, g.bonds[b]) + ring_digit(d);
      } else {
        out += ring_digit(open_digit[b]);
        free_digits.insert(open_digit[b]);
      }
    }
    for (std::size_t i = 0; i < children[v].size(); ++i) {
      const std::size_t b = children[v][i];
      const bool last = i + 1 == children[v].size();
      if (!last) out += '(';
      out += bond_text(g, g.bonds[b]);
      emit(g.bonds[b].other(v));
      if (!last) out += ')';
    }
  };
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (i) out += '.';
    emit(roots[i]);
  }
  return out;
}

bool isomorphic(const MolGraph& x, const MolGraph& y) {
  const std::size_t n = x.num_atoms();
  if (n != y.num_atoms() || x.num_bonds() != y.num_bonds()) return false;
  const auto lx = refined_labels(x), ly = refined_labels(y);
  {
    auto sx = lx, sy = ly;
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    if (sx != sy) return false;
  }
  // Visit x in BFS order so each new atom usually has a mapped neighbour.
  std::vector<std::size_t> order;
  std::vector<bool> queued(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (queued[s]) continue;
    queued[s] = true;
    order.push_back(s);
    for (std::size_t h = order.size() - 1; h < order.size(); ++h)
      for (std::size_t b : x.adjacency[order[h]]) {
        const std::size_t u = x.bonds[b].other(order[h]);
        if (!queued[u]) {
          queued[u] = true;
          order.push_back(u);
        }
      }
  }
  std::vector<std::size_t> map(n, MolGraph::npos), inv(n, MolGraph::npos);
  std::function<bool(std::size_t)> extend = [&](std::size_t depth) -> bool {
    if (depth == n) return true;
    const std::size_t v = order[depth];
    for (std::size_t w = 0; w < n; ++w) {
      if (inv[w] != MolGraph::npos || lx[v] != ly[w]) continue;
      bool ok = true;
      std::size_t mapped_x = 0, mapped_y = 0;
      for (std::size_t b : x.adjacency[v]) {
        const std::size_t u = x.bonds[b].other(v);
        if (map[u] == MolGraph::npos) continue;
        ++mapped_x;
        const std::size_t yb = y.bond_between(w, map[u]);
        if (yb == MolGraph::npos || y.bonds[yb].order != x.bonds[b].order) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      for (std::size_t b : y.adjacency[w])
        if (inv[y.bonds[b].other(w)] != MolGraph::npos) ++mapped_y;
      if (mapped_x != mapped_y) continue;
      map[v] = w;
      inv[w] = v;
      if (extend(depth + 1)) return true;
      map[v] = MolGraph::npos;
      inv[w] = MolGraph::npos;
    }
    return false;
  };
  return extend(0);
}

std::size_t element_bucket(const std::string& element) {
  static const std::array<std::string_view, 14> named = {"C", "N", "O", "S", "F", "Cl", "Br",
                                                          "I", "P", "B", "Si", "Se", "As", "Sn"};
  if (element == "*") return 15;
  for (std::size_t i = 0; i < named.size(); ++i)
    if (named[i] == element) return i;
  return 14;
}

Hybridization hybridization(const MolGraph& g, std::size_t atom) {
  int doubles = 0, triples = 0, aromatic = 0;
  for (std::size_t b : g.adjacency[atom]) {
    switch (g.bonds[b].order) {
      case BondOrder::Double: ++doubles; break;
      case BondOrder::Triple: ++triples; break;
      case BondOrder::Aromatic: ++aromatic; break;
      default: break;
    }
  }
  if (triples > 0 || doubles >= 2) return Hybridization::SP;
  if (doubles > 0 || aromatic > 0 || g.atoms[atom].aromatic) return Hybridization::SP2;
  const std::string& e = g.atoms[atom].element;
  if (e == "C" || e == "N" || e == "O" || e == "S") return Hybridization::SP3;
  return Hybridization::Other;
}

std::vector<double> featurize_atoms(const MolGraph& g) {
  const std::size_t n = g.num_atoms();
  std::vector<double> f(n * kAtomFeatureDim, 0.0);
  auto clamp = [](long v, long lo, long hi) { return static_cast<std::size_t>(std::clamp(v, lo, hi) - lo); };
  for (std::size_t v = 0; v < n; ++v) {
    const Atom& a = g.atoms[v];
    double* row = f.data() + v * kAtomFeatureDim;
    row[element_bucket(a.element)] = 1.0;
    row[16 + clamp(static_cast<long>(a.degree), 0, 5)] = 1.0;
    row[22 + clamp(a.total_h(), 0, 4)] = 1.0;
    row[27 + clamp(a.implicit_h, 0, 5)] = 1.0;
    row[33 + clamp(a.charge, -2, 2)] = 1.0;
    row[38 + static_cast<std::size_t>(hybridization(g, v))] = 1.0;
    row[42] = a.aromatic ? 1.0 : 0.0;
  }
  return f;
}

std::vector<double> featurize_bonds(const MolGraph& g) {
  std::vector<double> f(g.num_bonds() * kBondFeatureDim, 0.0);
  for (std::size_t b = 0; b < g.num_bonds(); ++b) {
    f[b * kBondFeatureDim + static_cast<std::size_t>(g.bonds[b].order)] = 1.0;
    f[b * kBondFeatureDim + 4] = g.bonds[b].in_ring ? 1.0 : 0.0;
  }
  return f;
}

}  // namespace hifdta::chem
