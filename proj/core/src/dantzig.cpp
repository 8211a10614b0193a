#include "dsim/dantzig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "dsim/error.hpp"

namespace dsim::dantzig {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd gather(const Eigen::MatrixXd& M, const std::vector<int>& rows, const std::vector<int>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = M(rows[r], cols[c]);
  }
  return out;
}

Eigen::VectorXd solve_block(const Eigen::MatrixXd& block, const Eigen::VectorXd& rhs) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(block);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularBlock,
                "clamped block of size " + std::to_string(block.rows()) + " is not invertible");
  }
  return lu.solve(rhs);
}

// Smallest step wins; on equal steps the earlier candidate is kept, so the
// caller visits indices in ascending order and the driven index last.
void offer(StepLimit& best, double s, int j, Bound bound) {
  if (s < best.step) best = {s, j, bound};
}

double non_negative(double s) { return s < 0.0 ? 0.0 : s; }

}  // namespace

std::vector<int> WorkingSets::members(SetId s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < set_.size(); ++i) {
    if (set_[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::uint64_t WorkingSets::hash() const {
  // FNV-1a over the set tags.
  std::uint64_t h = 1469598103934665603ull;
  for (SetId s : set_) {
    h ^= static_cast<std::uint64_t>(s);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<LcpClass> WorkingSets::classes(const FrictionMap& roles) const {
  std::vector<LcpClass> out(set_.size());
  for (std::size_t i = 0; i < set_.size(); ++i) {
    switch (set_[i]) {
      case SetId::C: out[i] = LcpClass::C; break;
      case SetId::N: out[i] = LcpClass::N; break;
      case SetId::F: out[i] = LcpClass::F; break;
      case SetId::H: out[i] = LcpClass::H; break;
      case SetId::L: out[i] = LcpClass::L; break;
      case SetId::Untouched:
        out[i] = roles.is_friction(static_cast<int>(i)) ? LcpClass::F : LcpClass::N;
        break;
    }
  }
  return out;
}

SetId to_set(LcpClass c) {
  switch (c) {
    case LcpClass::C: return SetId::C;
    case LcpClass::N: return SetId::N;
    case LcpClass::F: return SetId::F;
    case LcpClass::H: return SetId::H;
    case LcpClass::L: return SetId::L;
  }
  return SetId::Untouched;
}

bool sets_consistent(const WorkingSets& sets, const FrictionMap& roles) {
  if (sets.dim() != roles.dim()) return false;
  for (int i = 0; i < sets.dim(); ++i) {
    const SetId s = sets.of(i);
    if (s == SetId::Untouched) continue;
    const bool normal_set = s == SetId::C || s == SetId::N;
    if (roles.is_friction(i) == normal_set) return false;
    if (roles.is_friction(i) && sets.of(roles.normal_of(i)) == SetId::Untouched) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Frictionless primitives

Eigen::VectorXd solve_df(int k, const WorkingSets& sets, const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  Eigen::VectorXd df = Eigen::VectorXd::Zero(n);
  df[k] = 1.0;
  const std::vector<int> cc = sets.members(SetId::C);
  if (cc.empty()) return df;
  const Eigen::VectorXd rhs = -gather(A, cc, {k}).col(0);
  const Eigen::VectorXd x = solve_block(gather(A, cc, cc), rhs);
  for (std::size_t r = 0; r < cc.size(); ++r) df[cc[r]] = x[static_cast<Eigen::Index>(r)];
  return df;
}

StepLimit max_step(int k, const Eigen::VectorXd& f, const Eigen::VectorXd& df, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& da, const WorkingSets& sets) {
  StepLimit best{kInf, -1, Bound::None};
  for (int i = 0; i < sets.dim(); ++i) {
    if (i == k) continue;
    if (sets.of(i) == SetId::C && df[i] < 0.0) offer(best, non_negative(-f[i] / df[i]), i, Bound::None);
    if (sets.of(i) == SetId::N && da[i] < 0.0) offer(best, non_negative(-a[i] / da[i]), i, Bound::None);
  }
  if (da[k] > 0.0) offer(best, non_negative(-a[k] / da[k]), k, Bound::None);
  if (best.blocking < 0) {
    throw Error(ErrorCode::UnboundedRay, "drive of index " + std::to_string(k) + " is unbounded");
  }
  return best;
}

WorkingSets transit_set(int j, WorkingSets sets, bool driven) {
  switch (sets.of(j)) {
    case SetId::C: sets.assign(j, SetId::N); break;
    case SetId::N: sets.assign(j, SetId::C); break;
    default:
      if (driven) sets.assign(j, SetId::C);
      break;
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Frictional primitives

Eigen::VectorXd solve_df_friction(int k, const WorkingSets& sets, const LcpProblem& p,
                                  const FrictionMap& roles, int drive_sign) {
  const int n = p.dim();
  Eigen::MatrixXd folded = p.A;
  for (int i : sets.members(SetId::H)) folded.col(roles.normal_of(i)) += roles.mu_of(i) * p.A.col(i);
  for (int i : sets.members(SetId::L)) folded.col(roles.normal_of(i)) -= roles.mu_of(i) * p.A.col(i);

  std::vector<int> active = sets.members(SetId::C);
  const std::vector<int> sticking = sets.members(SetId::F);
  active.insert(active.end(), sticking.begin(), sticking.end());
  std::sort(active.begin(), active.end());

  Eigen::VectorXd df = Eigen::VectorXd::Zero(n);
  const double sign = drive_sign >= 0 ? 1.0 : -1.0;
  df[k] = sign;
  if (!active.empty()) {
    const Eigen::VectorXd rhs = -sign * gather(p.A, active, {k}).col(0);
    const Eigen::VectorXd x = solve_block(gather(folded, active, active), rhs);
    for (std::size_t r = 0; r < active.size(); ++r) df[active[r]] = x[static_cast<Eigen::Index>(r)];
  }
  for (int i : sets.members(SetId::H)) df[i] = roles.mu_of(i) * df[roles.normal_of(i)];
  for (int i : sets.members(SetId::L)) df[i] = -roles.mu_of(i) * df[roles.normal_of(i)];
  return df;
}

StepLimit max_step_friction(int k, const Eigen::VectorXd& f, const Eigen::VectorXd& df,
                            const Eigen::VectorXd& a, const Eigen::VectorXd& da, const WorkingSets& sets,
                            const FrictionMap& roles, MaxStepRule rule) {
  StepLimit best{kInf, -1, Bound::None};

  // Step at which friction index i reaches +bound (sign=+1) or -bound (sign=-1).
  auto bound_step = [&](int i, int sign) -> double {
    const int nrm = roles.normal_of(i);
    const double mu = roles.mu_of(i);
    const double bound = sign * mu * f[nrm];
    if (rule == MaxStepRule::Legacy) {
      if (sign * df[i] <= 0.0) return kInf;
      return non_negative((bound - f[i]) / df[i]);
    }
    const double rate = df[i] - sign * mu * df[nrm];
    if (sign * rate <= 0.0) return kInf;
    return non_negative((bound - f[i]) / rate);
  };

  for (int i = 0; i < sets.dim(); ++i) {
    if (i == k) continue;
    switch (sets.of(i)) {
      case SetId::C:
        if (df[i] < 0.0) offer(best, non_negative(-f[i] / df[i]), i, Bound::None);
        break;
      case SetId::F: {
        if (rule == MaxStepRule::Legacy) {
          // The constant-bound rule only looks at the bound f_i moves toward.
          if (df[i] > 0.0) offer(best, bound_step(i, +1), i, Bound::Upper);
          else if (df[i] < 0.0) offer(best, bound_step(i, -1), i, Bound::Lower);
          break;
        }
        const double up = bound_step(i, +1);
        const double lo = bound_step(i, -1);
        if (up <= lo) offer(best, up, i, Bound::Upper);
        else offer(best, lo, i, Bound::Lower);
        break;
      }
      case SetId::N:
      case SetId::L:
        if (da[i] < 0.0) offer(best, non_negative(-a[i] / da[i]), i, Bound::None);
        break;
      case SetId::H:
        if (da[i] > 0.0) offer(best, non_negative(-a[i] / da[i]), i, Bound::None);
        break;
      case SetId::Untouched:
        break;
    }
  }

  // The driven index: its residual reaching zero, or (friction) its bound.
  if (a[k] * da[k] < 0.0) offer(best, -a[k] / da[k], k, Bound::None);
  if (roles.is_friction(k)) {
    const int sign = df[k] > 0.0 ? +1 : -1;
    offer(best, bound_step(k, sign), k, sign > 0 ? Bound::Upper : Bound::Lower);
  }
  if (best.blocking < 0 || !std::isfinite(best.step)) {
    throw Error(ErrorCode::UnboundedRay, "drive of index " + std::to_string(k) + " is unbounded");
  }
  return best;
}

WorkingSets transit_set_friction(int j, WorkingSets sets, const Eigen::VectorXd& df,
                                 const TransitContext& ctx) {
  auto bound_or_sign = [&]() {
    if (ctx.bound != Bound::None) return ctx.bound;
    return df[j] > 0.0 ? Bound::Upper : Bound::Lower;
  };
  switch (sets.of(j)) {
    case SetId::C: sets.assign(j, SetId::N); break;
    case SetId::N: sets.assign(j, SetId::C); break;
    case SetId::F: sets.assign(j, bound_or_sign() == Bound::Upper ? SetId::H : SetId::L); break;
    case SetId::H:
    case SetId::L: sets.assign(j, SetId::F); break;
    case SetId::Untouched:
      if (j != ctx.driven) break;
      if (!ctx.driven_is_friction) sets.assign(j, SetId::C);
      else if (ctx.bound == Bound::Upper) sets.assign(j, SetId::H);
      else if (ctx.bound == Bound::Lower) sets.assign(j, SetId::L);
      else sets.assign(j, SetId::F);
      break;
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

class Driver {
 public:
  Driver(const LcpProblem& p, const Options& opts)
      : p_(p), opts_(opts), roles_(p), n_(p.dim()), sets_(n_), f_(Eigen::VectorXd::Zero(n_)),
        a_(p.b), has_friction_(!p.friction.empty()) {
    if (p.A.rows() != n_ || p.A.cols() != n_) {
      throw Error(ErrorCode::DimensionMismatch, "A does not match b");
    }
    pivot_cap_ = static_cast<long>(opts.iteration_cap_factor) * std::max(n_, 1);
  }

  Result run() {
    for (int k = 0; k < n_; ++k) drive(k);
    Result r;
    r.solution.f = f_;
    r.solution.a = p_.A * f_ + p_.b;
    r.solution.classes = sets_.classes(roles_);
    r.trace = std::move(trace_);
    return r;
  }

 private:
  // Classifies k directly when (f_k, a_k) already satisfies one of its
  // classes. Returns false when k has to be driven.
  bool classify_in_zone(int k) {
    const double tol = opts_.zero_tol;
    if (!roles_.is_friction(k)) {
      if (a_[k] >= -tol) {
        sets_.assign(k, a_[k] <= tol ? SetId::C : SetId::N);
        return true;
      }
      return false;
    }
    const double bound = roles_.mu_of(k) * f_[roles_.normal_of(k)];
    if (bound <= tol) {
      sets_.assign(k, a_[k] <= 0.0 ? SetId::H : SetId::L);
      f_[k] = a_[k] <= 0.0 ? bound : -bound;
      return true;
    }
    if (std::abs(a_[k]) <= tol) {
      sets_.assign(k, SetId::F);
      return true;
    }
    return false;
  }

  void drive(int k) {
    a_ = p_.A * f_ + p_.b;
    std::set<std::vector<SetId>> visited;
    visited.insert(sets_.raw());
    while (true) {
      if (classify_in_zone(k)) return;

      StepLimit lim;
      Eigen::VectorXd df;
      try {
        const int sign = a_[k] < 0.0 ? +1 : -1;
        if (has_friction_) {
          df = solve_df_friction(k, sets_, p_, roles_, sign);
        } else {
          df = solve_df(k, sets_, p_.A);
        }
        const Eigen::VectorXd da = p_.A * df;
        lim = has_friction_ ? max_step_friction(k, f_, df, a_, da, sets_, roles_, opts_.rule)
                            : max_step(k, f_, df, a_, da, sets_);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularBlock) throw;
        trace_.singular_fallback = true;
        ordered_search(k);
        return;
      }

      f_ += lim.step * df;
      if (lim.blocking != k && sets_.of(lim.blocking) == SetId::C) f_[lim.blocking] = 0.0;
      a_ = p_.A * f_ + p_.b;

      const bool finished = lim.blocking == k;
      if (has_friction_) {
        sets_ = transit_set_friction(lim.blocking, sets_, df, {k, roles_.is_friction(k), lim.bound});
      } else {
        sets_ = transit_set(lim.blocking, sets_, finished);
      }
      trace_.steps.push_back({k, lim.blocking, lim.step, sets_.hash()});
      if (opts_.observer) opts_.observer({f_, a_, sets_, k});
      if (finished) return;

      if (!visited.insert(sets_.raw()).second) {
        trace_.loop_detected = true;
        ordered_search(k);
        return;
      }
      if (static_cast<long>(trace_.steps.size()) > pivot_cap_) {
        trace_.iteration_cap_hit = true;
        ordered_search(k);
        return;
      }
    }
  }

  // Searches class assignments of indices [0, k] in order of Hamming distance
  // from the current assignment, then lexicographically.
  void ordered_search(int k) {
    ++trace_.ergodic_searches;
    const int m = k + 1;
    const LcpProblem sub = leading_subproblem(p_, m);
    const FrictionMap sub_roles(sub);

    std::vector<LcpClass> seed(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const SetId s = sets_.of(i);
      if (s == SetId::Untouched) {
        seed[static_cast<std::size_t>(i)] = sub_roles.is_friction(i) ? LcpClass::F : LcpClass::C;
      } else {
        seed[static_cast<std::size_t>(i)] = sets_.classes(roles_)[static_cast<std::size_t>(i)];
      }
    }
    auto domain = [&](int i) -> std::vector<LcpClass> {
      if (sub_roles.is_friction(i)) return {LcpClass::F, LcpClass::H, LcpClass::L};
      return {LcpClass::C, LcpClass::N};
    };

    for (int d = 0; d <= m; ++d) {
      std::vector<std::vector<LcpClass>> candidates;
      std::vector<int> positions;
      enumerate(seed, domain, 0, d, positions, candidates);
      std::sort(candidates.begin(), candidates.end());
      for (const auto& classes : candidates) {
        ++trace_.ergodic_candidates;
        auto s = solve_with_classes(sub, classes);
        if (!s || !validate_solution(sub, *s, opts_.search_tol).valid) continue;
        f_.head(m) = s->f;
        for (int i = 0; i < m; ++i) sets_.assign(i, to_set(classes[static_cast<std::size_t>(i)]));
        a_ = p_.A * f_ + p_.b;
        return;
      }
    }
    throw Error(ErrorCode::NoValidAssignment,
                "ordered class search exhausted for the first " + std::to_string(m) + " indices");
  }

  template <class Domain>
  void enumerate(const std::vector<LcpClass>& seed, const Domain& domain, int from, int remaining,
                 std::vector<int>& positions, std::vector<std::vector<LcpClass>>& out) {
    const int m = static_cast<int>(seed.size());
    if (remaining == 0) {
      std::vector<LcpClass> current = seed;
      expand(current, domain, positions, 0, out);
      return;
    }
    for (int i = from; i <= m - remaining; ++i) {
      positions.push_back(i);
      enumerate(seed, domain, i + 1, remaining - 1, positions, out);
      positions.pop_back();
    }
  }

  template <class Domain>
  void expand(std::vector<LcpClass>& current, const Domain& domain, const std::vector<int>& positions,
              std::size_t depth, std::vector<std::vector<LcpClass>>& out) {
    if (depth == positions.size()) {
      out.push_back(current);
      return;
    }
    const int i = positions[depth];
    const LcpClass original = current[static_cast<std::size_t>(i)];
    for (LcpClass c : domain(i)) {
      if (c == original) continue;
      current[static_cast<std::size_t>(i)] = c;
      expand(current, domain, positions, depth + 1, out);
    }
    current[static_cast<std::size_t>(i)] = original;
  }

  const LcpProblem& p_;
  const Options& opts_;
  FrictionMap roles_;
  int n_;
  WorkingSets sets_;
  Eigen::VectorXd f_;
  Eigen::VectorXd a_;
  bool has_friction_;
  long pivot_cap_ = 0;
  PivotTrace trace_;
};

}  // namespace

Result solve(const LcpProblem& p, const Options& opts) { return Driver(p, opts).run(); }

}  // namespace dsim::dantzig
