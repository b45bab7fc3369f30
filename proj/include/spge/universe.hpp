#pragma once

// The finite variable store a program runs over. Fixing a name bound N turns
// the variable space into a finite, densely indexed universe:
//
//   [0]                          like
//   [1 .. 4*S*N]                 per name (s, i): value, pr, val, cnt
//   [1 + 4*S*N ..]               program variables (parameters included)
//
// where S is the number of distinct name strings. States are then flat
// vectors and variable sets are bitsets, which the analysis and the
// interpreter both lean on heavily.

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spge/ast.hpp"

namespace spge {

inline constexpr int kDefaultNameBound = 16;

// Clamped name construction: the index expression's value is floored and
// clamped into [0, N).
inline Name create_name(const std::string& str, double raw_index, int name_bound) {
  double f = std::floor(raw_index);
  if (!(f >= 0.0)) f = 0.0;  // also catches NaN
  if (f > name_bound - 1) f = name_bound - 1;
  return Name{str, static_cast<int>(f)};
}

class VarSet;

class Universe {
 public:
  Universe(std::vector<std::string> name_strings, std::vector<std::string> params, int name_bound)
      : name_bound_(name_bound), name_strings_(std::move(name_strings)), params_(std::move(params)) {
    if (name_bound_ < 1) throw std::invalid_argument("name bound must be at least 1");
    std::sort(name_strings_.begin(), name_strings_.end());
    name_strings_.erase(std::unique(name_strings_.begin(), name_strings_.end()), name_strings_.end());
    // Parameter order is preserved (it fixes the gradient layout); only
    // duplicates are dropped.
    std::vector<std::string> uniq;
    for (std::string& p : params_) {
      if (std::find(uniq.begin(), uniq.end(), p) == uniq.end()) uniq.push_back(std::move(p));
    }
    params_ = std::move(uniq);
    for (std::size_t s = 0; s < name_strings_.size(); ++s) string_index_[name_strings_[s]] = s;
    for (std::size_t p = 0; p < params_.size(); ++p) param_index_[params_[p]] = p;
  }

  // Builds the universe spanned by a set of programs plus extra parameters
  // (e.g. declared but unused ones).
  static Universe from_programs(const std::vector<CmdPtr>& programs,
                                const std::vector<std::string>& extra_params,
                                int name_bound = kDefaultNameBound) {
    std::vector<std::string> strings;
    std::vector<std::string> params = extra_params;
    auto note_var = [&](const Var& v) {
      if (v.kind == VarKind::Param && !v.is_binder()) params.push_back(v.id);
    };
    for (const CmdPtr& program : programs) {
      for_each_command(program, [&](const CmdPtr& c) {
        switch (c->kind) {
          case Command::Kind::Assign:
            note_var(c->target);
            for_each_free_var(*c->expr, note_var);
            break;
          case Command::Kind::If:
          case Command::Kind::While:
            for_each_free_var(*c->cond, note_var);
            break;
          case Command::Kind::Sample:
            note_var(c->target);
            strings.push_back(c->name.str);
            for_each_free_var(*c->name.index, note_var);
            for_each_free_var(*c->dist.mean, note_var);
            for_each_free_var(*c->dist.variance, note_var);
            for_each_free_var(*c->lam.body, note_var);
            break;
          case Command::Kind::Observe:
            for_each_free_var(*c->dist.mean, note_var);
            for_each_free_var(*c->dist.variance, note_var);
            break;
          default: break;
        }
      });
    }
    return Universe(std::move(strings), std::move(params), name_bound);
  }

  int name_bound() const { return name_bound_; }
  const std::vector<std::string>& name_strings() const { return name_strings_; }
  const std::vector<std::string>& params() const { return params_; }

  std::size_t size() const {
    return 1 + 4 * name_strings_.size() * static_cast<std::size_t>(name_bound_) + params_.size();
  }
  std::size_t name_count() const { return name_strings_.size() * static_cast<std::size_t>(name_bound_); }

  // Dense index of a name (s, i) among all names, row-major by string.
  std::size_t name_slot(const Name& n) const {
    auto it = string_index_.find(n.str);
    if (it == string_index_.end()) throw std::out_of_range("unknown name string: " + n.str);
    if (n.index < 0 || n.index >= name_bound_) throw std::out_of_range("name index out of bounds");
    return it->second * static_cast<std::size_t>(name_bound_) + static_cast<std::size_t>(n.index);
  }
  Name name_at(std::size_t slot) const {
    return Name{name_strings_[slot / name_bound_], static_cast<int>(slot % name_bound_)};
  }

  std::size_t index_like() const { return 0; }
  std::size_t index_name_val(const Name& n) const { return 1 + 4 * name_slot(n); }
  std::size_t index_pr(const Name& n) const { return 2 + 4 * name_slot(n); }
  std::size_t index_val(const Name& n) const { return 3 + 4 * name_slot(n); }
  std::size_t index_cnt(const Name& n) const { return 4 + 4 * name_slot(n); }
  std::size_t index_param(const std::string& id) const {
    auto it = param_index_.find(id);
    if (it == param_index_.end()) throw std::out_of_range("unknown program variable: " + id);
    return 1 + 4 * name_count() + it->second;
  }

  std::size_t index(const Var& v) const {
    switch (v.kind) {
      case VarKind::Param: return index_param(v.id);
      case VarKind::Like: return index_like();
      case VarKind::NameVal: return index_name_val(Name{v.id, v.index});
      case VarKind::Pr: return index_pr(Name{v.id, v.index});
      case VarKind::Val: return index_val(Name{v.id, v.index});
      case VarKind::Cnt: return index_cnt(Name{v.id, v.index});
    }
    throw std::out_of_range("unknown variable kind");
  }

  Var var_at(std::size_t idx) const {
    if (idx == 0) return Var::like();
    const std::size_t names_end = 1 + 4 * name_count();
    if (idx < names_end) {
      const std::size_t rel = idx - 1;
      const Name n = name_at(rel / 4);
      switch (rel % 4) {
        case 0: return Var::name_val(n);
        case 1: return Var::pr(n);
        case 2: return Var::val(n);
        default: return Var::cnt(n);
      }
    }
    return Var::param(params_.at(idx - names_end));
  }

 private:
  int name_bound_;
  std::vector<std::string> name_strings_;
  std::vector<std::string> params_;
  std::map<std::string, std::size_t> string_index_;
  std::map<std::string, std::size_t> param_index_;
};

// A subset of a universe's variables, stored as a bitset.
class VarSet {
 public:
  VarSet() = default;
  explicit VarSet(std::size_t universe_size)
      : size_(universe_size), words_((universe_size + 63) / 64, 0) {}

  static VarSet full(std::size_t universe_size) {
    VarSet s(universe_size);
    for (std::uint64_t& w : s.words_) w = ~0ull;
    s.trim();
    return s;
  }

  std::size_t universe_size() const { return size_; }
  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1; }
  void set(std::size_t i) { words_[i >> 6] |= 1ull << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(1ull << (i & 63)); }

  VarSet& operator|=(const VarSet& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= o.words_[w];
    return *this;
  }
  VarSet& operator&=(const VarSet& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] &= o.words_[w];
    return *this;
  }
  friend VarSet operator|(VarSet a, const VarSet& b) { return a |= b; }
  friend VarSet operator&(VarSet a, const VarSet& b) { return a &= b; }
  VarSet operator~() const {
    VarSet out = *this;
    for (std::uint64_t& w : out.words_) w = ~w;
    out.trim();
    return out;
  }
  friend bool operator==(const VarSet& a, const VarSet& b) {
    return a.size_ == b.size_ && a.words_ == b.words_;
  }

  bool subset_of(const VarSet& o) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (words_[w] & ~o.words_[w]) return false;
    }
    return true;
  }

  bool empty() const {
    for (const std::uint64_t w : words_) {
      if (w) return false;
    }
    return true;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const std::uint64_t w : words_) n += static_cast<std::size_t>(__builtin_popcountll(w));
    return n;
  }

  template <class F>
  void for_each(const F& fn) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        const int b = __builtin_ctzll(bits);
        fn(w * 64 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }

 private:
  void trim() {
    if (size_ & 63) words_.back() &= (1ull << (size_ & 63)) - 1;
  }

  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

// Free variables of an expression as a bitset over `u`. Lambda binders must
// have been substituted away (index() throws on them), which keeps
// accidentally-unsubstituted bodies loud instead of silently wrong.
inline VarSet fv_set(const Expr& e, const Universe& u) {
  VarSet out(u.size());
  for_each_free_var(e, [&](const Var& v) { out.set(u.index(v)); });
  return out;
}

inline VarSet fv_set(const BoolExpr& b, const Universe& u) {
  VarSet out(u.size());
  for_each_free_var(b, [&](const Var& v) { out.set(u.index(v)); });
  return out;
}

}  // namespace spge
