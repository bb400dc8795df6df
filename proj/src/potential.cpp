#include "cgbn/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cgbn/errors.hpp"

namespace cgbn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Domain {
  std::vector<DiscreteVar> discrete;
  std::vector<NodeId> continuous;
};

Domain union_domain(const CGPotential& a, const CGPotential& b) {
  Domain d;
  std::vector<DiscreteVar> all = a.discrete_vars();
  all.insert(all.end(), b.discrete_vars().begin(), b.discrete_vars().end());
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  for (const auto& v : all) {
    if (!d.discrete.empty() && d.discrete.back().id == v.id) {
      if (d.discrete.back().cardinality != v.cardinality)
        throw DomainError(fmt::format("variable {} has conflicting cardinalities", v.id));
      continue;
    }
    d.discrete.push_back(v);
  }
  std::set_union(a.continuous_vars().begin(), a.continuous_vars().end(), b.continuous_vars().begin(),
                 b.continuous_vars().end(), std::back_inserter(d.continuous));
  for (const auto& v : d.discrete)
    if (std::binary_search(d.continuous.begin(), d.continuous.end(), v.id))
      throw DomainError(fmt::format("variable {} is both discrete and continuous", v.id));
  return d;
}

std::size_t table_size(const std::vector<DiscreteVar>& vars) {
  std::size_t n = 1;
  for (const auto& v : vars) n *= static_cast<std::size_t>(v.cardinality);
  return n;
}

// For every configuration of `dst`, the index of its restriction to `src`.
// `src` must be a subset of `dst`. `fixed` pins src variables absent from dst.
std::vector<std::size_t> project_indices(const std::vector<DiscreteVar>& dst, const std::vector<DiscreteVar>& src,
                                         std::size_t offset = 0) {
  std::vector<std::size_t> src_stride(src.size());
  std::size_t s = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    src_stride[i] = s;
    s *= static_cast<std::size_t>(src[i].cardinality);
  }
  std::vector<std::size_t> stride(dst.size(), 0);
  for (std::size_t j = 0; j < dst.size(); ++j) {
    for (std::size_t i = 0; i < src.size(); ++i)
      if (src[i].id == dst[j].id) stride[j] = src_stride[i];
  }
  const std::size_t n = table_size(dst);
  std::vector<std::size_t> out(n);
  std::vector<int> digit(dst.size(), 0);
  std::size_t idx = offset;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = idx;
    for (std::size_t j = dst.size(); j-- > 0;) {
      if (++digit[j] < dst[j].cardinality) {
        idx += stride[j];
        break;
      }
      digit[j] = 0;
      idx -= stride[j] * static_cast<std::size_t>(dst[j].cardinality - 1);
    }
  }
  return out;
}

std::vector<int> positions_in(const std::vector<NodeId>& dst, const std::vector<NodeId>& src) {
  std::vector<int> pos(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto it = std::lower_bound(dst.begin(), dst.end(), src[i]);
    pos[i] = static_cast<int>(it - dst.begin());
  }
  return pos;
}

bool same_domain(const CGPotential& a, const CGPotential& b) {
  return a.discrete_vars() == b.discrete_vars() && a.continuous_vars() == b.continuous_vars();
}

void scatter_add(CanonicalForm& out, const CanonicalForm& in, const std::vector<int>& pos, double sign) {
  const auto n = pos.size();
  for (std::size_t r = 0; r < n; ++r) {
    out.h[pos[r]] += sign * in.h[r];
    for (std::size_t c = 0; c < n; ++c) out.K(pos[r], pos[c]) += sign * in.K(r, c);
  }
}

// Cholesky of a symmetric block, repaired once with the variance floor.
Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd repaired = m;
  repaired.diagonal().array() += kVarianceFloor;
  llt.compute(repaired);
  if (llt.info() != Eigen::Success)
    throw NumericalError(fmt::format("{} is not positive definite", what));
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

double log_sum_exp(const std::vector<double>& xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

CanonicalForm void_form(std::size_t dim) {
  return {kLogZero, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)),
          Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))};
}

CanonicalForm canonical_from_moments(const MomentForm& m) {
  const auto n = static_cast<std::size_t>(m.mean.size());
  if (m.is_void()) return void_form(n);
  CanonicalForm f;
  if (n == 0) {
    f.g = m.log_weight;
    return f;
  }
  auto llt = factor_spd(m.covariance, "covariance");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m.covariance.rows(), m.covariance.cols());
  f.K = llt.solve(I);
  f.K = 0.5 * (f.K + f.K.transpose());
  f.h = f.K * m.mean;
  f.g = m.log_weight - 0.5 * (static_cast<double>(n) * kLog2Pi + log_det(llt)) - 0.5 * m.mean.dot(f.h);
  return f;
}

}  // namespace

CGPotential::CGPotential() : table_(1) {
  table_[0].h = Eigen::VectorXd(0);
  table_[0].K = Eigen::MatrixXd(0, 0);
}

CGPotential::CGPotential(std::vector<DiscreteVar> discrete, std::vector<NodeId> continuous)
    : discrete_(std::move(discrete)), continuous_(std::move(continuous)) {
  std::sort(discrete_.begin(), discrete_.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  std::sort(continuous_.begin(), continuous_.end());
  for (const auto& v : discrete_)
    if (v.cardinality < 1) throw ArgumentError(fmt::format("variable {} has no states", v.id));
  const auto dim = static_cast<Eigen::Index>(continuous_.size());
  table_.assign(table_size(discrete_), CanonicalForm{0.0, Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)});
}

CGPotential CGPotential::from_moments(std::vector<DiscreteVar> discrete, std::vector<NodeId> continuous,
                                      const std::vector<MomentForm>& table) {
  CGPotential p(std::move(discrete), std::move(continuous));
  if (table.size() != p.size()) throw ArgumentError("moment table size does not match the domain");
  for (std::size_t i = 0; i < table.size(); ++i) p.table_[i] = canonical_from_moments(table[i]);
  return p;
}

std::vector<int> CGPotential::configuration(std::size_t index) const {
  std::vector<int> cfg(discrete_.size());
  for (std::size_t j = discrete_.size(); j-- > 0;) {
    const auto card = static_cast<std::size_t>(discrete_[j].cardinality);
    cfg[j] = static_cast<int>(index % card);
    index /= card;
  }
  return cfg;
}

std::size_t CGPotential::index_of(const std::vector<int>& cfg) const {
  if (cfg.size() != discrete_.size()) throw ArgumentError("configuration has the wrong length");
  std::size_t index = 0;
  for (std::size_t j = 0; j < cfg.size(); ++j) {
    if (cfg[j] < 0 || cfg[j] >= discrete_[j].cardinality) throw ArgumentError("configuration out of range");
    index = index * static_cast<std::size_t>(discrete_[j].cardinality) + static_cast<std::size_t>(cfg[j]);
  }
  return index;
}

int CGPotential::discrete_position(NodeId id) const {
  for (std::size_t i = 0; i < discrete_.size(); ++i)
    if (discrete_[i].id == id) return static_cast<int>(i);
  return -1;
}

int CGPotential::continuous_position(NodeId id) const {
  auto it = std::lower_bound(continuous_.begin(), continuous_.end(), id);
  if (it == continuous_.end() || *it != id) return -1;
  return static_cast<int>(it - continuous_.begin());
}

MomentForm CGPotential::moments(std::size_t i) const {
  const auto& f = table_[i];
  const auto n = static_cast<Eigen::Index>(continuous_.size());
  MomentForm m;
  if (f.is_void()) {
    m.mean = Eigen::VectorXd::Zero(n);
    m.covariance = Eigen::MatrixXd::Zero(n, n);
    return m;
  }
  if (n == 0) {
    m.log_weight = f.g;
    m.mean = Eigen::VectorXd(0);
    m.covariance = Eigen::MatrixXd(0, 0);
    return m;
  }
  auto llt = factor_spd(f.K, "precision matrix");
  m.covariance = llt.solve(Eigen::MatrixXd::Identity(n, n));
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose());
  m.mean = llt.solve(f.h);
  m.log_weight = f.g + 0.5 * (static_cast<double>(n) * kLog2Pi - log_det(llt) + f.h.dot(m.mean));
  return m;
}

double CGPotential::log_mass(std::size_t i) const {
  const auto& f = table_[i];
  if (f.is_void() || continuous_.empty()) return f.g;
  auto llt = factor_spd(f.K, "precision matrix");
  const Eigen::VectorXd mu = llt.solve(f.h);
  return f.g + 0.5 * (static_cast<double>(continuous_.size()) * kLog2Pi - log_det(llt) + f.h.dot(mu));
}

double CGPotential::total_log_mass() const {
  std::vector<double> masses(table_.size());
  for (std::size_t i = 0; i < table_.size(); ++i) masses[i] = log_mass(i);
  return log_sum_exp(masses);
}

void CGPotential::shift_log(double offset) {
  for (auto& f : table_)
    if (!f.is_void()) f.g += offset;
}

CGPotential extend(const CGPotential& p, const std::vector<DiscreteVar>& discrete, const std::vector<NodeId>& continuous) {
  CGPotential out(discrete, continuous);
  for (const auto& v : p.discrete_vars()) {
    const int pos = out.discrete_position(v.id);
    if (pos < 0) throw ArgumentError(fmt::format("extend: target domain lacks discrete variable {}", v.id));
    if (out.discrete_vars()[pos].cardinality != v.cardinality)
      throw DomainError(fmt::format("variable {} has conflicting cardinalities", v.id));
    if (out.has_continuous(v.id)) throw DomainError(fmt::format("variable {} is both discrete and continuous", v.id));
  }
  for (NodeId v : p.continuous_vars()) {
    if (out.has_discrete(v)) throw DomainError(fmt::format("variable {} is both discrete and continuous", v));
    if (!out.has_continuous(v)) throw ArgumentError(fmt::format("extend: target domain lacks continuous variable {}", v));
  }
  const auto proj = project_indices(out.discrete_vars(), p.discrete_vars());
  const auto pos = positions_in(out.continuous_vars(), p.continuous_vars());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& src = p[proj[i]];
    if (src.is_void()) {
      out[i].g = kLogZero;
      continue;
    }
    out[i].g = src.g;
    scatter_add(out[i], src, pos, 1.0);
  }
  return out;
}

namespace {

CGPotential combine(const CGPotential& a, const CGPotential& b, bool dividing) {
  const double sign = dividing ? -1.0 : 1.0;
  auto merge = [&](CanonicalForm& out, const CanonicalForm& fa, const CanonicalForm& fb,
                   const std::vector<int>& pa, const std::vector<int>& pb) {
    if (dividing && fb.is_void()) {
      if (!fa.is_void()) throw UndefinedDivision("division of a nonzero configuration by zero");
      out.g = kLogZero;
      return;
    }
    if (fa.is_void() || fb.is_void()) {
      out.g = kLogZero;
      return;
    }
    out.g = fa.g + sign * fb.g;
    scatter_add(out, fa, pa, 1.0);
    scatter_add(out, fb, pb, sign);
  };

  if (same_domain(a, b)) {
    CGPotential out(a.discrete_vars(), a.continuous_vars());
    std::vector<int> id(a.dimension());
    for (std::size_t i = 0; i < id.size(); ++i) id[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < out.size(); ++i) merge(out[i], a[i], b[i], id, id);
    return out;
  }
  const Domain d = union_domain(a, b);
  CGPotential out(d.discrete, d.continuous);
  const auto ia = project_indices(out.discrete_vars(), a.discrete_vars());
  const auto ib = project_indices(out.discrete_vars(), b.discrete_vars());
  const auto pa = positions_in(out.continuous_vars(), a.continuous_vars());
  const auto pb = positions_in(out.continuous_vars(), b.continuous_vars());
  for (std::size_t i = 0; i < out.size(); ++i) merge(out[i], a[ia[i]], b[ib[i]], pa, pb);
  return out;
}

}  // namespace

CGPotential multiply(const CGPotential& a, const CGPotential& b) { return combine(a, b, false); }

CGPotential divide(const CGPotential& a, const CGPotential& b) { return combine(a, b, true); }

CGPotential reduce_evidence(const CGPotential& p, const Evidence& e) {
  std::vector<DiscreteVar> keep_d;
  std::size_t offset = 0;
  {
    std::size_t stride = 1;
    std::vector<std::size_t> strides(p.discrete_vars().size());
    for (std::size_t i = p.discrete_vars().size(); i-- > 0;) {
      strides[i] = stride;
      stride *= static_cast<std::size_t>(p.discrete_vars()[i].cardinality);
    }
    for (std::size_t i = 0; i < p.discrete_vars().size(); ++i) {
      const auto& v = p.discrete_vars()[i];
      if (e.continuous.count(v.id))
        throw DomainError(fmt::format("variable {} is discrete but observed as continuous", v.id));
      auto it = e.discrete.find(v.id);
      if (it == e.discrete.end()) {
        keep_d.push_back(v);
        continue;
      }
      if (it->second < 0 || it->second >= v.cardinality)
        throw ArgumentError(fmt::format("state {} out of range for variable {}", it->second, v.id));
      offset += strides[i] * static_cast<std::size_t>(it->second);
    }
  }
  std::vector<NodeId> keep_c;
  std::vector<int> r_pos, o_pos;
  std::vector<double> y;
  for (std::size_t i = 0; i < p.continuous_vars().size(); ++i) {
    const NodeId v = p.continuous_vars()[i];
    if (e.discrete.count(v)) throw DomainError(fmt::format("variable {} is continuous but observed as discrete", v));
    auto it = e.continuous.find(v);
    if (it == e.continuous.end()) {
      keep_c.push_back(v);
      r_pos.push_back(static_cast<int>(i));
    } else {
      o_pos.push_back(static_cast<int>(i));
      y.push_back(it->second);
    }
  }
  if (keep_d.size() == p.discrete_vars().size() && o_pos.empty()) return p;

  // Index into p of every kept configuration: the kept variables keep their
  // strides in p, the observed ones contribute a constant offset.
  std::vector<DiscreteVar> full = p.discrete_vars();
  CGPotential out(keep_d, keep_c);
  std::vector<std::size_t> src_index;
  {
    std::vector<std::size_t> pstride(full.size());
    std::size_t s = 1;
    for (std::size_t i = full.size(); i-- > 0;) {
      pstride[i] = s;
      s *= static_cast<std::size_t>(full[i].cardinality);
    }
    std::vector<std::size_t> stride;
    for (const auto& v : keep_d)
      for (std::size_t i = 0; i < full.size(); ++i)
        if (full[i].id == v.id) stride.push_back(pstride[i]);
    src_index.resize(out.size());
    std::vector<int> digit(keep_d.size(), 0);
    std::size_t idx = offset;
    for (std::size_t k = 0; k < out.size(); ++k) {
      src_index[k] = idx;
      for (std::size_t j = keep_d.size(); j-- > 0;) {
        if (++digit[j] < keep_d[j].cardinality) {
          idx += stride[j];
          break;
        }
        digit[j] = 0;
        idx -= stride[j] * static_cast<std::size_t>(keep_d[j].cardinality - 1);
      }
    }
  }

  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& f = p[src_index[k]];
    if (f.is_void()) {
      out[k].g = kLogZero;
      continue;
    }
    if (o_pos.empty()) {
      out[k] = f;
      continue;
    }
    const Eigen::VectorXd hO = f.h(o_pos);
    const Eigen::MatrixXd KOO = f.K(o_pos, o_pos);
    out[k].g = f.g + hO.dot(yv) - 0.5 * yv.dot(KOO * yv);
    out[k].h = f.h(r_pos) - f.K(r_pos, o_pos) * yv;
    out[k].K = f.K(r_pos, r_pos);
  }
  return out;
}

CGPotential marginalize_continuous(const CGPotential& p, const std::vector<NodeId>& vars) {
  if (vars.empty()) return p;
  std::vector<int> e_pos, r_pos;
  std::vector<NodeId> keep;
  for (NodeId v : vars)
    if (!p.has_continuous(v)) throw ArgumentError(fmt::format("variable {} is not a continuous variable of the potential", v));
  for (std::size_t i = 0; i < p.continuous_vars().size(); ++i) {
    const NodeId v = p.continuous_vars()[i];
    if (std::find(vars.begin(), vars.end(), v) != vars.end()) {
      e_pos.push_back(static_cast<int>(i));
    } else {
      r_pos.push_back(static_cast<int>(i));
      keep.push_back(v);
    }
  }
  CGPotential out(p.discrete_vars(), keep);
  const double ne = static_cast<double>(e_pos.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& f = p[k];
    if (f.is_void()) {
      out[k].g = kLogZero;
      continue;
    }
    const Eigen::MatrixXd KEE = f.K(e_pos, e_pos);
    auto llt = factor_spd(KEE, "eliminated precision block");
    const Eigen::VectorXd hE = f.h(e_pos);
    const Eigen::VectorXd x = llt.solve(hE);
    out[k].g = f.g + 0.5 * (ne * kLog2Pi - log_det(llt) + hE.dot(x));
    if (!r_pos.empty()) {
      const Eigen::MatrixXd KRE = f.K(r_pos, e_pos);
      out[k].h = f.h(r_pos) - KRE * x;
      Eigen::MatrixXd K = f.K(r_pos, r_pos) - KRE * llt.solve(KRE.transpose());
      out[k].K = 0.5 * (K + K.transpose());
    }
  }
  return out;
}

CGPotential marginalize_discrete_weak(const CGPotential& p, const std::vector<NodeId>& vars) {
  if (vars.empty()) return p;
  for (NodeId v : vars)
    if (!p.has_discrete(v)) throw ArgumentError(fmt::format("variable {} is not a discrete variable of the potential", v));
  std::vector<DiscreteVar> keep;
  for (const auto& v : p.discrete_vars())
    if (std::find(vars.begin(), vars.end(), v.id) == vars.end()) keep.push_back(v);

  CGPotential out(keep, p.continuous_vars());
  // out index of every p configuration
  std::vector<std::size_t> target(p.size());
  {
    std::vector<std::size_t> stride_out(keep.size());
    std::size_t s = 1;
    for (std::size_t i = keep.size(); i-- > 0;) {
      stride_out[i] = s;
      s *= static_cast<std::size_t>(keep[i].cardinality);
    }
    std::vector<std::size_t> stride(p.discrete_vars().size(), 0);
    for (std::size_t j = 0; j < p.discrete_vars().size(); ++j)
      for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i].id == p.discrete_vars()[j].id) stride[j] = stride_out[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      auto cfg = p.configuration(k);
      std::size_t t = 0;
      for (std::size_t j = 0; j < cfg.size(); ++j) t += stride[j] * static_cast<std::size_t>(cfg[j]);
      target[k] = t;
    }
  }
  std::vector<std::vector<std::size_t>> groups(out.size());
  for (std::size_t k = 0; k < p.size(); ++k)
    if (!p[k].is_void()) groups[target[k]].push_back(k);

  if (p.dimension() == 0) {
    double max = kLogZero;
    for (std::size_t k = 0; k < p.size(); ++k) max = std::max(max, p[k].g);
    const double cut = max - kVoidLogGap;
    for (std::size_t t = 0; t < out.size(); ++t) {
      std::vector<double> gs;
      for (auto k : groups[t])
        if (p[k].g >= cut) gs.push_back(p[k].g);
      out[t].g = log_sum_exp(gs);
    }
    return out;
  }

  std::vector<MomentForm> m(p.size());
  double max = kLogZero;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].is_void()) continue;
    m[k] = p.moments(k);
    max = std::max(max, m[k].log_weight);
  }
  const double cut = max - kVoidLogGap;
  const auto n = static_cast<Eigen::Index>(p.dimension());
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::vector<std::size_t> live;
    for (auto k : groups[t])
      if (m[k].log_weight >= cut) live.push_back(k);
    if (live.empty()) {
      out[t].g = kLogZero;
      continue;
    }
    if (live.size() == 1) {
      out[t] = p[live[0]];
      continue;
    }
    std::vector<double> lw;
    for (auto k : live) lw.push_back(m[k].log_weight);
    MomentForm c;
    c.log_weight = log_sum_exp(lw);
    c.mean = Eigen::VectorXd::Zero(n);
    c.covariance = Eigen::MatrixXd::Zero(n, n);
    for (auto k : live) c.mean += std::exp(m[k].log_weight - c.log_weight) * m[k].mean;
    for (auto k : live) {
      const double w = std::exp(m[k].log_weight - c.log_weight);
      const Eigen::VectorXd d = m[k].mean - c.mean;
      c.covariance += w * (m[k].covariance + d * d.transpose());
    }
    out[t] = canonical_from_moments(c);
  }
  return out;
}

CGPotential marginalize_to(const CGPotential& p, const std::vector<NodeId>& keep) {
  auto kept = [&](NodeId v) { return std::find(keep.begin(), keep.end(), v) != keep.end(); };
  std::vector<NodeId> drop_c, drop_d;
  for (NodeId v : p.continuous_vars())
    if (!kept(v)) drop_c.push_back(v);
  for (const auto& v : p.discrete_vars())
    if (!kept(v.id)) drop_d.push_back(v.id);
  return marginalize_discrete_weak(marginalize_continuous(p, drop_c), drop_d);
}

}  // namespace cgbn
