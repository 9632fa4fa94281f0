#include "mfair/conditional.hpp"

#include <algorithm>
#include <cmath>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

namespace {

// n x k standard normals; odd rows mirror the previous row when antithetic.
Eigen::MatrixXd normals(std::size_t n, std::size_t k, Rng& rng, bool antithetic) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < n; ++r) {
    bool mirror = antithetic && (r % 2 == 1);
    for (std::size_t c = 0; c < k; ++c)
      z(r, c) = mirror ? -z(r - 1, c) : std_normal(rng);
  }
  return z;
}

Eigen::MatrixXd uniforms(std::size_t n, std::size_t k, Rng& rng, bool antithetic) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < n; ++r) {
    bool mirror = antithetic && (r % 2 == 1);
    for (std::size_t c = 0; c < k; ++c) u(r, c) = mirror ? 1.0 - u(r - 1, c) : uniform01(rng);
  }
  return u;
}

void check_n(std::size_t n) {
  if (n < 2) throw InvalidInput("sampler: need at least two draws");
}

}  // namespace

double ConditionalSampler::class_prob(std::size_t, std::size_t, std::span<const double>) const {
  throw InvalidInput("class probabilities need a discrete protected attribute");
}

GaussianBackend::GaussianBackend(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::size_t m, double noise_sd)
    : mean_(std::move(mean)), cov_(std::move(cov)), m_(m), noise_sd_(noise_sd) {
  const Eigen::Index k = mean_.size(), mm = static_cast<Eigen::Index>(m_);
  if (cov_.rows() != k || cov_.cols() != k) throw InvalidInput("gaussian backend: covariance has wrong shape");
  if (mm < 1 || mm > k) throw InvalidInput("gaussian backend: invalid number of protected attributes");
  if (!(noise_sd_ >= 0.0)) throw InvalidInput("gaussian backend: noise sd must be non-negative");
  if (!cov_.isApprox(cov_.transpose(), 1e-12)) throw InvalidInput("gaussian backend: covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> full(cov_);
  if (full.info() != Eigen::Success) throw InvalidInput("gaussian backend: covariance must be positive definite");
  const Eigen::Index p = k - mm;
  Eigen::MatrixXd Sdd = cov_.topLeftCorner(mm, mm);
  if (p > 0) {
    Eigen::MatrixXd Sdx = cov_.topRightCorner(mm, p);
    Eigen::MatrixXd Sxx = cov_.bottomRightCorner(p, p);
    gain_ = Sxx.llt().solve(Sdx.transpose()).transpose();
    cond_cov_ = Sdd - gain_ * Sdx.transpose();
  } else {
    gain_ = Eigen::MatrixXd::Zero(mm, 0);
    cond_cov_ = Sdd;
  }
  cond_cov_ = 0.5 * (cond_cov_ + cond_cov_.transpose());
  cond_chol_ = cond_cov_.llt().matrixL();
  marg_chol_ = Sdd.llt().matrixL();
}

GaussianBackend GaussianBackend::bivariate(double mu_x, double mu_d, double sd_x, double sd_d, double tau,
                                           double noise_sd) {
  if (!(sd_x > 0 && sd_d > 0) || !(tau > -1 && tau < 1)) throw InvalidInput("bivariate gaussian: invalid parameters");
  Eigen::VectorXd mu(2);
  mu << mu_d, mu_x;
  Eigen::MatrixXd c(2, 2);
  c << sd_d * sd_d, tau * sd_d * sd_x, tau * sd_d * sd_x, sd_x * sd_x;
  return GaussianBackend(mu, c, 1, noise_sd);
}

Eigen::VectorXd GaussianBackend::cond_mean(std::span<const double> x) const {
  if (x.size() != n_other()) throw InvalidInput("gaussian backend: covariate dimension mismatch");
  Eigen::VectorXd out = mean_.head(m_);
  if (!x.empty()) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    out += gain_ * (xv - mean_.tail(static_cast<Eigen::Index>(x.size())));
  }
  return out;
}

double GaussianBackend::cond_mean_D(std::size_t i, std::span<const double> x) const {
  if (i >= m_) throw InvalidInput("protected index out of range");
  return cond_mean(x)[static_cast<Eigen::Index>(i)];
}

double GaussianBackend::cond_second_moment_D(std::size_t i, std::span<const double> x) const {
  double mu = cond_mean_D(i, x);
  return cond_cov_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) + mu * mu;
}

ConditionalSample GaussianBackend::draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const {
  check_n(n);
  Rng rng(seed);
  Eigen::VectorXd mu = cond_mean(x);
  Eigen::MatrixXd z = normals(n, m_ + 1, rng, antithetic);
  ConditionalSample s;
  s.d = (z.leftCols(static_cast<Eigen::Index>(m_)) * cond_chol_.transpose()).rowwise() + mu.transpose();
  s.noise = noise_sd_ * z.col(static_cast<Eigen::Index>(m_));
  s.v = uniforms(n, m_, rng, antithetic);
  return s;
}

ConditionalSample GaussianBackend::draw_marginal(std::size_t n, std::uint64_t seed) const {
  check_n(n);
  Rng rng(seed);
  Eigen::MatrixXd z = normals(n, m_ + 1, rng, antithetic);
  ConditionalSample s;
  s.d = (z.leftCols(static_cast<Eigen::Index>(m_)) * marg_chol_.transpose()).rowwise() +
        mean_.head(static_cast<Eigen::Index>(m_)).transpose();
  s.noise = noise_sd_ * z.col(static_cast<Eigen::Index>(m_));
  s.v = uniforms(n, m_, rng, antithetic);
  return s;
}

namespace {
GaussianBackend::LinearMoments moments(const PredictionModel& model, std::span<const double> x,
                                       const Eigen::VectorXd& mean_d, const Eigen::MatrixXd& cov_d, double noise_sd) {
  if (model.family() == Family::custom || model.link() != Link::identity)
    throw InvalidInput("analytic gaussian moments need an identity-link model");
  const auto& b = model.coefficients();
  std::size_t m = model.n_protected();
  if (static_cast<std::size_t>(mean_d.size()) != m || x.size() != model.n_other())
    throw InvalidInput("analytic gaussian moments: model and backend dimensions differ");
  Eigen::VectorXd bd(m);
  for (std::size_t i = 0; i < m; ++i) bd[static_cast<Eigen::Index>(i)] = b[i + 1];
  GaussianBackend::LinearMoments r;
  r.mean_d = mean_d;
  r.cov_d = cov_d;
  r.cov_dy = cov_d * bd;
  r.mean_y = b[0] + bd.dot(mean_d);
  for (std::size_t j = 0; j < x.size(); ++j) r.mean_y += b[m + 1 + j] * x[j];
  r.var_y = bd.dot(r.cov_dy) + noise_sd * noise_sd;
  return r;
}
}  // namespace

GaussianBackend::LinearMoments GaussianBackend::linear_moments(const PredictionModel& model,
                                                               std::span<const double> x) const {
  return moments(model, x, cond_mean(x), cond_cov_, noise_sd_);
}

GaussianBackend::LinearMoments GaussianBackend::marginal_linear_moments(const PredictionModel& model,
                                                                        std::span<const double> x) const {
  const Eigen::Index mm = static_cast<Eigen::Index>(m_);
  return moments(model, x, mean_.head(mm), cov_.topLeftCorner(mm, mm), noise_sd_);
}

CopulaSampler::CopulaSampler(ProtectedSpec spec, double rho, double mu_x, double sd_x, std::size_t n_other,
                             double noise_sd)
    : spec_(std::move(spec)), rho_(rho), mu_x_(mu_x), sd_x_(sd_x), p_(n_other), noise_sd_(noise_sd) {
  if (spec_.kind == ProtectedKind::continuous) throw InvalidInput("copula sampler needs a compact or discrete law");
  if (!(rho > -1 && rho < 1) || !(sd_x > 0) || p_ < 1) throw InvalidInput("copula sampler: invalid parameters");
}

ConditionalSample CopulaSampler::draw_latent(double centre, double spread, std::size_t n, std::uint64_t seed) const {
  check_n(n);
  Rng rng(seed);
  Eigen::MatrixXd z = normals(n, 2, rng, antithetic);
  ConditionalSample s;
  s.d.resize(static_cast<Eigen::Index>(n), 1);
  s.noise = noise_sd_ * z.col(1);
  s.v = uniforms(n, 1, rng, antithetic);
  for (std::size_t r = 0; r < n; ++r) {
    double u = norm_cdf(centre + spread * z(r, 0));
    u = std::clamp(u, 1e-15, 1.0 - 1e-15);
    if (spec_.kind == ProtectedKind::compact) {
      s.d(r, 0) = spec_.compact.quantile(u);
    } else {
      const auto& law = spec_.discrete;
      std::size_t k = 0;
      while (k + 1 < law.size() && u > law.cumulative(k)) ++k;
      s.d(r, 0) = law.levels[k];
    }
  }
  return s;
}

ConditionalSample CopulaSampler::draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const {
  if (x.size() != p_) throw InvalidInput("copula sampler: covariate dimension mismatch");
  double z = (x[0] - mu_x_) / sd_x_;
  return draw_latent(rho_ * z, std::sqrt(1.0 - rho_ * rho_), n, seed);
}

ConditionalSample CopulaSampler::draw_marginal(std::size_t n, std::uint64_t seed) const {
  return draw_latent(0.0, 1.0, n, seed);
}

double CopulaSampler::class_prob(std::size_t i, std::size_t k, std::span<const double> x) const {
  if (i != 0 || spec_.kind != ProtectedKind::discrete) return ConditionalSampler::class_prob(i, k, x);
  const auto& law = spec_.discrete;
  if (k >= law.size()) throw InvalidInput("level index out of range");
  double z = (x[0] - mu_x_) / sd_x_, s = std::sqrt(1.0 - rho_ * rho_);
  auto cut = [&](std::size_t j) { return norm_cdf((norm_quantile(law.cumulative(j)) - rho_ * z) / s); };
  double hi = k + 1 < law.size() ? cut(k) : 1.0;
  double lo = k ? cut(k - 1) : 0.0;
  return hi - lo;
}

MixtureSampler::MixtureSampler(DiscreteLaw law, std::vector<CascadeFactor> x_given_d, double noise_sd)
    : law_(std::move(law)), factors_(std::move(x_given_d)), noise_sd_(noise_sd) {
  if (factors_.empty()) throw InvalidInput("mixture sampler needs at least one covariate factor");
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    if (!factors_[j].pdf) throw InvalidInput("mixture sampler: covariate factor without a density");
    if (factors_[j].coordinate != j + 1) throw InvalidInput("mixture sampler: factor coordinates must be 1..p in order");
  }
}

double MixtureSampler::class_prob(std::size_t i, std::size_t k, std::span<const double> x) const {
  if (i != 0) return ConditionalSampler::class_prob(i, k, x);
  if (x.size() != factors_.size()) throw InvalidInput("mixture sampler: covariate dimension mismatch");
  std::vector<double> w(law_.size());
  double tot = 0.0;
  for (std::size_t j = 0; j < law_.size(); ++j) {
    double l = law_.probs[j];
    for (std::size_t c = 0; c < factors_.size(); ++c) l *= factors_[c].pdf(x[c], law_.levels[j]);
    w[j] = l;
    tot += l;
  }
  if (!(tot > 0)) throw NumericalError("mixture sampler: covariates have zero density under every level");
  return w.at(k) / tot;
}

ConditionalSample MixtureSampler::draw_probs(const std::vector<double>& probs, std::size_t n, std::uint64_t seed) const {
  check_n(n);
  Rng rng(seed);
  Eigen::MatrixXd u = uniforms(n, 2, rng, antithetic);
  Eigen::MatrixXd z = normals(n, 1, rng, antithetic);
  ConditionalSample s;
  s.d.resize(static_cast<Eigen::Index>(n), 1);
  s.noise = noise_sd_ * z.col(0);
  s.v = u.col(1);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u(r, 0) <= acc) break;
    }
    s.d(r, 0) = law_.levels[k];
  }
  return s;
}

ConditionalSample MixtureSampler::draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const {
  std::vector<double> pr(law_.size());
  for (std::size_t k = 0; k < pr.size(); ++k) pr[k] = class_prob(0, k, x);
  return draw_probs(pr, n, seed);
}

ConditionalSample MixtureSampler::draw_marginal(std::size_t n, std::uint64_t seed) const {
  return draw_probs(law_.probs, n, seed);
}

CallableSampler::CallableSampler(std::size_t m, std::size_t p, DrawFn conditional, DrawFn marginal)
    : m_(m), p_(p), cond_(std::move(conditional)), marg_(std::move(marginal)) {}

ConditionalSample CallableSampler::draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const {
  return cond_(x, n, seed);
}

ConditionalSample CallableSampler::draw_marginal(std::size_t n, std::uint64_t seed) const {
  if (!marg_) throw InvalidInput("sampler has no marginal law");
  return marg_({}, n, seed);
}

FeatureMap FeatureMap::identity(std::vector<std::string> names) {
  FeatureMap f;
  f.names = std::move(names);
  std::size_t p = f.names.size();
  f.apply = [p](std::span<const double> x) {
    if (x.size() != p) throw InvalidInput("feature map: covariate dimension mismatch");
    return std::vector<double>(x.begin(), x.end());
  };
  return f;
}

FeatureMap FeatureMap::polynomial(std::vector<std::string> names, int degree) {
  if (degree < 1) throw InvalidInput("polynomial feature map needs degree >= 1");
  FeatureMap f;
  std::size_t p = names.size();
  for (const auto& n : names)
    for (int k = 1; k <= degree; ++k) f.names.push_back(k == 1 ? n : n + "^" + std::to_string(k));
  f.kind = "polynomial";
  f.degree = degree;
  f.apply = [p, degree](std::span<const double> x) {
    if (x.size() != p) throw InvalidInput("feature map: covariate dimension mismatch");
    std::vector<double> out;
    for (double v : x) {
      double t = 1.0;
      for (int k = 1; k <= degree; ++k) out.push_back(t *= v);
    }
    return out;
  };
  return f;
}

Eigen::MatrixXd FeatureMap::design(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd F(X.rows(), static_cast<Eigen::Index>(names.size()));
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) row[static_cast<std::size_t>(c)] = X(r, c);
    auto f = apply(row);
    for (std::size_t c = 0; c < f.size(); ++c) F(r, static_cast<Eigen::Index>(c)) = f[c];
  }
  return F;
}

RegressionBackend::RegressionBackend(FeatureMap map) : map_(std::move(map)) {}

void RegressionBackend::set(const std::string& quantity, PredictionModel model, double sign) {
  if (model.layout().size() != map_.names.size())
    throw InvalidInput("regression backend: model for '" + quantity + "' does not match the feature map");
  models_[quantity] = std::move(model);
  sign_[quantity] = sign < 0 ? -1.0 : 1.0;
  approx_.emplace(quantity, false);
}

const PredictionModel& RegressionBackend::model(const std::string& quantity) const {
  auto it = models_.find(quantity);
  if (it == models_.end()) throw NotFitted("regression backend: quantity '" + quantity + "' has not been fitted");
  return it->second;
}

double RegressionBackend::predict(const std::string& quantity, std::span<const double> x) const {
  const auto& m = model(quantity);
  auto f = map_.apply(x);
  return sign_.at(quantity) * m.predict_row(f);
}

Eigen::VectorXd RegressionBackend::predict_all(const std::string& quantity, const Eigen::MatrixXd& X) const {
  const auto& m = model(quantity);
  return sign_.at(quantity) * m.predict_matrix(map_.design(X));
}

bool RegressionBackend::sign_approximated(const std::string& quantity) const {
  auto it = approx_.find(quantity);
  return it != approx_.end() && it->second;
}

void RegressionBackend::fit(const std::string& quantity, const Eigen::MatrixXd& X, const Eigen::VectorXd& target,
                            const Eigen::VectorXd& weights, const RegressorSpec& spec) {
  Dataset ds;
  ds.Z = map_.design(X);
  ds.w = weights;
  ds.layout = FeatureLayout::plain(0, map_.names.size());
  ds.layout.names = map_.names;
  double sign = 1.0;
  bool approx = false;
  bool nonneg = spec.family == Family::poisson || spec.family == Family::gamma || spec.family == Family::tweedie;
  if (nonneg) {
    KahanSum s;
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
      s.add((weights.size() ? weights[i] : 1.0) * target[i]);
      pos |= target[i] > 0;
      neg |= target[i] < 0;
    }
    sign = s.value() < 0 ? -1.0 : 1.0;
    approx = pos && neg;
    ds.y = target.cwiseAbs();
  } else {
    ds.y = target;
  }
  auto m = fit_glm(ds, spec.family, spec.link, spec.power, spec.fit);
  set(quantity, std::move(m), sign);
  approx_[quantity] = approx;
}

void RegressionBackend::fit_class_probs(std::size_t i, const Eigen::MatrixXd& X, const Eigen::VectorXd& d,
                                        const DiscreteLaw& law, const Eigen::VectorXd& weights, FitOptions opts) {
  if (opts.ridge == 0.0) opts.ridge = 1e-6;  // keeps separable data well posed
  RegressorSpec spec{Family::binomial, Link::logit, 0.0, opts};
  std::size_t K = law.size();
  for (Eigen::Index r = 0; r < d.size(); ++r) law.index_of(d[r]);
  for (std::size_t k = (K == 2 ? 1 : 0); k < K; ++k) {
    Eigen::VectorXd ind = (d.array() == law.levels[k]).cast<double>();
    fit(class_key(i, k), X, ind, weights, spec);
  }
  n_levels_[i] = K;
}

double RegressionBackend::cond_mean_D(std::size_t i, std::span<const double> x) const { return predict(mean_key(i), x); }

double RegressionBackend::cond_second_moment_D(std::size_t i, std::span<const double> x) const {
  return predict(second_moment_key(i), x);
}

double RegressionBackend::cond_class_prob(std::size_t i, std::size_t k, std::span<const double> x) const {
  auto it = n_levels_.find(i);
  if (it == n_levels_.end()) throw NotFitted("regression backend: class probabilities not fitted");
  std::size_t K = it->second;
  if (k >= K) throw InvalidInput("level index out of range");
  if (K == 2) {
    double p1 = predict(class_key(i, 1), x);
    return k == 1 ? p1 : 1.0 - p1;
  }
  double tot = 0.0, pk = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    double p = predict(class_key(i, j), x);
    tot += p;
    if (j == k) pk = p;
  }
  return pk / tot;
}

nlohmann::ordered_json RegressionBackend::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "mfair.regression_backend";
  j["version"] = 1;
  j["features"] = {{"kind", map_.kind}, {"degree", map_.degree}, {"names", map_.names}};
  nlohmann::ordered_json ms = nlohmann::ordered_json::object();
  for (const auto& [k, m] : models_)
    ms[k] = {{"sign", sign_.at(k)}, {"sign_approximated", sign_approximated(k)}, {"model", m.to_json()}};
  j["quantities"] = ms;
  nlohmann::ordered_json lv = nlohmann::ordered_json::object();
  for (const auto& [i, K] : n_levels_) lv[std::to_string(i)] = K;
  j["class_levels"] = lv;
  return j;
}

void RegressionBackend::load_models(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mfair.regression_backend") throw InvalidInput("not a regression backend file");
    for (const auto& [k, v] : j.at("quantities").items()) {
      set(k, PredictionModel::from_json(v.at("model")), v.at("sign").get<double>());
      approx_[k] = v.at("sign_approximated").get<bool>();
    }
    for (const auto& [k, v] : j.at("class_levels").items()) n_levels_[std::stoul(k)] = v.get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("regression backend json: ") + e.what());
  }
}

ConditionalTail ConditionalTail::fit(const FeatureMap& map, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& weights, double alpha, TailOptions opts) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidInput("tail level must lie in [0,1)");
  ConditionalTail t;
  t.map_ = map;
  t.alpha_ = alpha;
  Dataset ds;
  ds.Z = map.design(X);
  ds.y = y;
  ds.w = weights;
  ds.layout = FeatureLayout::plain(0, map.names.size());
  ds.layout.names = map.names;
  std::vector<Eigen::Index> keep;
  if (alpha > 0.0) {
    t.var_ = fit_quantile(ds, alpha, opts.quantile);
    t.has_var_ = true;
    Eigen::VectorXd q = t.var_.predict_matrix(ds.Z);
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] > q[i]) keep.push_back(i);
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) keep.push_back(i);
  }
  t.n_exceed_ = keep.size();
  if (keep.size() < opts.min_exceedances)
    throw TooFewExceedances("tail fit: only " + std::to_string(keep.size()) + " exceedances (minimum " +
                            std::to_string(opts.min_exceedances) + ")");
  Dataset ex;
  ex.layout = ds.layout;
  ex.Z.resize(static_cast<Eigen::Index>(keep.size()), ds.Z.cols());
  ex.y.resize(static_cast<Eigen::Index>(keep.size()));
  if (weights.size()) ex.w.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    Eigen::Index i = keep[r], rr = static_cast<Eigen::Index>(r);
    ex.Z.row(rr) = ds.Z.row(i);
    ex.y[rr] = y[i];
    if (weights.size()) ex.w[rr] = weights[i];
  }
  t.tail_ = fit_glm(ex, opts.tail.family, opts.tail.link, opts.tail.power, opts.tail.fit);
  return t;
}

double ConditionalTail::cond_var(std::span<const double> x) const {
  if (!has_var_) throw InvalidInput("tail fitted at level 0 has no quantile model");
  return var_.predict_row(map_.apply(x));
}

double ConditionalTail::cond_es(std::span<const double> x) const { return tail_.predict_row(map_.apply(x)); }

}  // namespace mfair
