#include "stackelberg/chaos_basis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include <Eigen/Dense>

#include "stackelberg/error.hpp"

namespace stackelberg {

bool HaarIndex::valid() const {
  if (is_scaling()) return s1 == -1 && s2 == 0;
  return s1 < 31 && s2 >= 0 && static_cast<long long>(s2) + 1 <= (1LL << s1);
}

double HaarIndex::start_fraction() const {
  if (is_scaling()) return 0.0;
  return std::ldexp(static_cast<double>(s2), -s1);
}

double HaarIndex::end_fraction() const {
  if (is_scaling()) return 1.0;
  return std::ldexp(static_cast<double>(s2 + 1), -s1);
}

int ChaosIndex::total_degree() const {
  int n = 0;
  for (const auto& f : factors) n += f.degree;
  return n;
}

int ChaosIndex::max_level() const {
  int n = 0;
  for (const auto& f : factors) n = std::max(n, f.direction.s1);
  return n;
}

std::string BasisElement::serialize() const {
  std::ostringstream out;
  out << '(' << time.s1 << ',' << time.s2 << ")|";
  for (std::size_t i = 0; i < chaos.factors.size(); ++i) {
    const auto& f = chaos.factors[i];
    if (i > 0) out << ';';
    out << f.coord << ':' << f.direction.s1 << ':' << f.direction.s2 << ':' << f.degree;
  }
  return out.str();
}

BasisElement BasisElement::parse(const std::string& text) {
  BasisElement e;
  const auto bar = text.find('|');
  if (bar == std::string::npos) throw ConfigError("basis index: missing '|' in " + text);
  char open = 0, comma = 0, close = 0;
  std::istringstream head(text.substr(0, bar));
  if (!(head >> open >> e.time.s1 >> comma >> e.time.s2 >> close) || open != '(' || comma != ',' || close != ')') {
    throw ConfigError("basis index: malformed time index in " + text);
  }
  std::istringstream tail(text.substr(bar + 1));
  std::string item;
  e.norm_constant = 1.0;
  while (std::getline(tail, item, ';')) {
    if (item.empty()) continue;
    ChaosFactor f;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(item);
    if (!(in >> f.coord >> c1 >> f.direction.s1 >> c2 >> f.direction.s2 >> c3 >> f.degree) || c1 != ':' || c2 != ':' ||
        c3 != ':') {
      throw ConfigError("basis index: malformed chaos factor '" + item + "'");
    }
    e.chaos.factors.push_back(f);
    e.norm_constant *= std::sqrt(std::tgamma(f.degree + 1.0));
  }
  std::sort(e.chaos.factors.begin(), e.chaos.factors.end());
  return e;
}

double hermite(int i, double x) {
  if (i < 0) throw DomainError("hermite: negative degree");
  if (i == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int n = 1; n < i; ++n) {
    const double next = (x * cur - prev) / (n + 1);
    prev = cur;
    cur = next;
  }
  return cur;
}

double haar_eval(const HaarIndex& idx, double t, double T) {
  if (!(t >= 0.0 && t <= T)) throw DomainError("haar_eval: t outside [0,T]");
  if (!idx.valid()) throw DomainError("haar_eval: invalid Haar index");
  if (idx.is_scaling()) return 1.0 / std::sqrt(T);
  const double x = t / T;
  const double a = idx.start_fraction();
  const double b = idx.end_fraction();
  if (x < a || x >= b) return 0.0;
  const double amp = std::sqrt(std::ldexp(1.0, idx.s1) / T);
  return x < 0.5 * (a + b) ? amp : -amp;
}

namespace {

// Grid step of the dyadic point s/2^level, or -1 if it is not a node.
int grid_step(long long s, int level, int M) {
  const long long num = s * M;
  const long long den = 1LL << level;
  if (num % den != 0) return -1;
  return static_cast<int>(num / den);
}

void require_on_grid(const HaarIndex& h, int M) {
  if (h.is_scaling()) return;
  if (grid_step(2LL * h.s2 + 1, h.s1 + 1, M) < 0) {
    throw ConfigError("chaos_basis: Haar breakpoints of level " + std::to_string(h.s1) + " are not grid nodes for M=" +
                      std::to_string(M));
  }
}

}  // namespace

double haar_wiener_integral(const HaarIndex& dir, int coord, const BrownianEnsemble& ens, std::size_t p) {
  const HorizonConfig& cfg = ens.config();
  if (coord < 0 || coord >= cfg.d) throw DimensionError("chaos_basis: Brownian coordinate out of range");
  if (!dir.valid()) throw DomainError("chaos_basis: invalid space direction");
  if (dir.is_scaling()) return ens.increment_sum(p, 0, cfg.M, coord) / std::sqrt(cfg.T);
  require_on_grid(dir, cfg.M);
  const int a = grid_step(dir.s2, dir.s1, cfg.M);
  const int mid = grid_step(2LL * dir.s2 + 1, dir.s1 + 1, cfg.M);
  const int b = grid_step(dir.s2 + 1LL, dir.s1, cfg.M);
  const double amp = std::sqrt(std::ldexp(1.0, dir.s1) / cfg.T);
  return amp * (ens.increment_sum(p, a, mid, coord) - ens.increment_sum(p, mid, b, coord));
}

double literal_product_normalizer(int degree) {
  if (degree < 1) throw DomainError("literal product: degree must be positive");
  // Gauss-Hermite (probabilists') nodes via Golub-Welsch, exact for the squared product.
  const int poly = degree * (degree + 1);
  const int n = poly / 2 + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  double second_moment = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = eig.eigenvalues()[k];
    const double w = eig.eigenvectors()(0, k) * eig.eigenvectors()(0, k);
    double v = 1.0;
    for (int j = 1; j <= degree; ++j) v *= hermite(j, x);
    second_moment += w * v * v;
  }
  return 1.0 / std::sqrt(second_moment);
}

double chaos_value(const ChaosIndex& idx, const BrownianEnsemble& ens, std::size_t p, ChaosForm form) {
  double v = 1.0;
  for (const auto& f : idx.factors) {
    const double xi = haar_wiener_integral(f.direction, f.coord, ens, p);
    if (form == ChaosForm::Tensor) {
      v *= std::sqrt(std::tgamma(f.degree + 1.0)) * hermite(f.degree, xi);
    } else {
      double prod = 1.0;
      for (int j = 1; j <= f.degree; ++j) prod *= hermite(j, xi);
      v *= literal_product_normalizer(f.degree) * prod;
    }
  }
  return v;
}

bool admissible(const HaarIndex& time, const ChaosIndex& chaos, const HorizonConfig& cfg) {
  if (!time.valid()) return false;
  const int top = cfg.levels() - 1;
  if (time.s1 > top) return false;
  if (time.is_scaling() && !chaos.empty()) return false;
  for (std::size_t i = 0; i < chaos.factors.size(); ++i) {
    const auto& f = chaos.factors[i];
    if (f.degree < 1 || f.coord < 0 || f.coord >= cfg.d) return false;
    if (!f.direction.valid() || f.direction.is_scaling() || f.direction.s1 > top) return false;
    // (k+1)/2^i <= s2/2^{s1}
    if (static_cast<long long>(f.direction.s2 + 1) << time.s1 > static_cast<long long>(time.s2) << f.direction.s1) {
      return false;
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (chaos.factors[j].coord == f.coord && chaos.factors[j].direction == f.direction) return false;
    }
  }
  return true;
}

namespace {

int resolution(const HaarIndex& time, const ChaosIndex& chaos) {
  return std::max(time.s1, 0) + chaos.max_level();
}

struct Enumeration {
  std::vector<BasisElement> elements;
  int next_grade = 0;
  bool exhausted = false;
};

// All chaos indices over the candidate directions with total degree `deg`.
void chaos_sets(const std::vector<ChaosFactor>& cand, std::size_t from, int deg, std::vector<ChaosFactor>& cur,
                std::vector<ChaosIndex>& out) {
  if (deg == 0) {
    out.push_back(ChaosIndex{cur});
    return;
  }
  for (std::size_t i = from; i < cand.size(); ++i) {
    for (int k = 1; k <= deg; ++k) {
      ChaosFactor f = cand[i];
      f.degree = k;
      cur.push_back(f);
      chaos_sets(cand, i + 1, deg - k, cur, out);
      cur.pop_back();
    }
  }
}

// Elements of grade g = resolution + total degree, in canonical order.
std::vector<BasisElement> grade_elements(int g, const HorizonConfig& cfg) {
  const int top = cfg.levels() - 1;
  std::vector<BasisElement> out;
  auto add = [&](const HaarIndex& time, ChaosIndex chaos) {
    std::sort(chaos.factors.begin(), chaos.factors.end());
    BasisElement e{time, std::move(chaos), 1.0, 0};
    for (const auto& f : e.chaos.factors) e.norm_constant *= std::sqrt(std::tgamma(f.degree + 1.0));
    out.push_back(std::move(e));
  };
  if (g == 0) add(HaarIndex::scaling(), {});
  for (int s1 = 0; s1 <= std::min(g, top); ++s1) {
    for (int s2 = 0; s2 < (1 << s1); ++s2) {
      const HaarIndex time{s1, s2};
      if (s1 == g) {
        add(time, {});
        continue;
      }
      // directions finishing before the time function starts, with scale <= g - s1 - 1
      for (int imax = 1; imax <= std::min(top, g - s1 - 1); ++imax) {
        const int deg = g - s1 - imax;
        std::vector<ChaosFactor> lower;
        std::vector<ChaosFactor> at_max;
        for (int c = 0; c < cfg.d; ++c) {
          for (int i = 1; i <= imax; ++i) {
            for (int k = 0; k < (1 << i); ++k) {
              if (static_cast<long long>(k + 1) << s1 > static_cast<long long>(s2) << i) break;
              (i == imax ? at_max : lower).push_back({c, {i, k}, 1});
            }
          }
        }
        // at least one direction at scale imax
        std::vector<ChaosFactor> cand = at_max;
        cand.insert(cand.end(), lower.begin(), lower.end());
        std::vector<ChaosIndex> sets;
        std::vector<ChaosFactor> cur;
        for (std::size_t first = 0; first < at_max.size(); ++first) {
          for (int k = 1; k <= deg; ++k) {
            ChaosFactor f = cand[first];
            f.degree = k;
            cur.assign(1, f);
            chaos_sets(cand, first + 1, deg - k, cur, sets);
          }
        }
        for (auto& ci : sets) add(time, std::move(ci));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const BasisElement& a, const BasisElement& b) {
    const auto ka = std::make_tuple(resolution(a.time, a.chaos), a.chaos.total_degree());
    const auto kb = std::make_tuple(resolution(b.time, b.chaos), b.chaos.total_degree());
    if (ka != kb) return ka < kb;
    if (a.time != b.time) return a.time < b.time;
    return a.chaos < b.chaos;
  });
  return out;
}

std::mutex g_enum_mutex;
std::map<std::pair<int, int>, Enumeration> g_enums;

}  // namespace

BasisElement basis_element(std::size_t rank, const HorizonConfig& cfg) {
  cfg.validate();
  std::lock_guard<std::mutex> lock(g_enum_mutex);
  Enumeration& en = g_enums[{cfg.levels(), cfg.d}];
  while (en.elements.size() <= rank && !en.exhausted) {
    auto batch = grade_elements(en.next_grade, cfg);
    ++en.next_grade;
    // Without chaos (M = 2) only the scaling function and psi_{0,0} exist.
    if (batch.empty() && en.next_grade > cfg.levels() + 1) en.exhausted = true;
    for (auto& e : batch) {
      e.rank = en.elements.size();
      en.elements.push_back(std::move(e));
    }
  }
  if (rank >= en.elements.size()) {
    throw DomainError("basis_element: rank " + std::to_string(rank) + " exceeds the basis available on this grid");
  }
  return en.elements[rank];
}

std::vector<BasisElement> basis_elements(std::size_t count, const HorizonConfig& cfg) {
  std::vector<BasisElement> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) out.push_back(basis_element(r, cfg));
  return out;
}

namespace {

std::vector<double> time_row(const HaarIndex& time, const HorizonConfig& cfg) {
  std::vector<double> row(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) row[m] = haar_eval(time, m * cfg.dt(), cfg.T);
  return row;
}

void require_element(const BasisElement& e, const HorizonConfig& cfg) {
  require_on_grid(e.time, cfg.M);
  for (const auto& f : e.chaos.factors) require_on_grid(f.direction, cfg.M);
  if (!admissible(e.time, e.chaos, cfg)) {
    throw ConfigError("chaos_basis: element " + e.serialize() + " is not admissible on this grid");
  }
}

}  // namespace

AdaptedProcess evaluate_basis(const BasisElement& elem, const BrownianEnsemble& ens) {
  require_element(elem, ens.config());
  return AdaptedProcess::causal(ens, [elem](const BrownianEnsemble& e) {
    const std::vector<double> row = time_row(elem.time, e.config());
    AdaptedProcess u = AdaptedProcess::zeros(e, 1);
    for (std::size_t p = 0; p < e.paths(); ++p) {
      const double c = elem.chaos.empty() ? 1.0 : chaos_value(elem.chaos, e, p);
      for (int m = 0; m < e.steps(); ++m) u.at(p, m) = row[m] == 0.0 ? 0.0 : row[m] * c;
    }
    return u;
  });
}

std::vector<double> basis_inner_samples(const BasisElement& a, const BasisElement& b, const BrownianEnsemble& ens) {
  const HorizonConfig& cfg = ens.config();
  require_element(a, cfg);
  require_element(b, cfg);
  const auto ra = time_row(a.time, cfg);
  const auto rb = time_row(b.time, cfg);
  double overlap = 0.0;
  for (int m = 0; m < cfg.M; ++m) overlap += ra[m] * rb[m] * cfg.dt();
  std::vector<double> out(ens.paths(), 0.0);
  if (overlap == 0.0) return out;
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    const double ca = a.chaos.empty() ? 1.0 : chaos_value(a.chaos, ens, p);
    const double cb = b.chaos.empty() ? 1.0 : chaos_value(b.chaos, ens, p);
    out[p] = overlap * ca * cb;
  }
  return out;
}

}  // namespace stackelberg
