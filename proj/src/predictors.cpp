#include "mfair/predictors.hpp"

#include <algorithm>
#include <cmath>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

std::string to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::poisson: return "poisson";
    case Family::gamma: return "gamma";
    case Family::tweedie: return "tweedie";
    case Family::binomial: return "binomial";
    case Family::custom: return "custom";
  }
  return "?";
}

std::string to_string(Link l) {
  switch (l) {
    case Link::identity: return "identity";
    case Link::log: return "log";
    case Link::logit: return "logit";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::gaussian, Family::poisson, Family::gamma, Family::tweedie, Family::binomial})
    if (to_string(f) == s) return f;
  throw InvalidInput("unknown family '" + s + "'");
}

Link link_from_string(const std::string& s) {
  for (Link l : {Link::identity, Link::log, Link::logit})
    if (to_string(l) == s) return l;
  throw InvalidInput("unknown link '" + s + "'");
}

FeatureLayout FeatureLayout::plain(std::size_t n_protected, std::size_t n_other) {
  FeatureLayout l;
  l.n_protected = n_protected;
  for (std::size_t i = 0; i < n_protected; ++i) l.names.push_back("d" + std::to_string(i + 1));
  for (std::size_t i = 0; i < n_other; ++i) l.names.push_back("x" + std::to_string(i + 1));
  l.one_hot.assign(l.names.size(), false);
  l.levels.assign(n_protected, {});
  return l;
}

void FeatureLayout::validate() const {
  if (n_protected > names.size()) throw InvalidInput("layout: more protected columns than columns");
  if (one_hot.size() != names.size()) throw InvalidInput("layout: one_hot flags do not match columns");
  if (levels.size() != n_protected) throw InvalidInput("layout: levels must be given per protected column");
}

PredictionModel PredictionModel::linear(std::vector<double> coef, FeatureLayout layout) {
  return glm(Family::gaussian, Link::identity, 0.0, std::move(coef), std::move(layout));
}

PredictionModel PredictionModel::glm(Family family, Link link, double power, std::vector<double> coef,
                                     FeatureLayout layout) {
  layout.validate();
  if (coef.size() != layout.size() + 1)
    throw InvalidInput("model: expected " + std::to_string(layout.size() + 1) + " coefficients, got " +
                       std::to_string(coef.size()));
  for (double c : coef)
    if (!std::isfinite(c)) throw InvalidInput("model: non-finite coefficient");
  PredictionModel m;
  m.family_ = family;
  m.link_ = link;
  m.power_ = power;
  m.coef_ = std::move(coef);
  m.layout_ = std::move(layout);
  return m;
}

PredictionModel PredictionModel::custom(Callable f, FeatureLayout layout) {
  layout.validate();
  PredictionModel m;
  m.family_ = Family::custom;
  m.custom_ = std::move(f);
  m.layout_ = std::move(layout);
  return m;
}

double PredictionModel::inverse_link(double eta) const {
  switch (link_) {
    case Link::identity: return eta;
    case Link::log: return std::exp(eta);
    case Link::logit: return 1.0 / (1.0 + std::exp(-eta));
  }
  return eta;
}

double PredictionModel::linear_predictor(std::span<const double> z) const {
  if (family_ == Family::custom) throw InvalidInput("custom model has no linear predictor");
  if (z.size() != layout_.size()) throw InvalidInput("model: row has wrong number of columns");
  double eta = coef_[0];
  for (std::size_t j = 0; j < z.size(); ++j) eta += coef_[j + 1] * z[j];
  return eta;
}

double PredictionModel::predict_row(std::span<const double> z) const {
  if (family_ == Family::custom) {
    std::size_t m = layout_.n_protected;
    return custom_(z.subspan(0, m), z.subspan(m));
  }
  return inverse_link(linear_predictor(z));
}

double PredictionModel::predict(std::span<const double> d, std::span<const double> x) const {
  if (d.size() != layout_.n_protected || d.size() + x.size() != layout_.size())
    throw InvalidInput("model: input dimension does not match layout");
  if (family_ == Family::custom) return custom_(d, x);
  double eta = coef_[0];
  for (std::size_t j = 0; j < d.size(); ++j) eta += coef_[j + 1] * d[j];
  for (std::size_t j = 0; j < x.size(); ++j) eta += coef_[d.size() + j + 1] * x[j];
  return inverse_link(eta);
}

Eigen::VectorXd PredictionModel::predict_matrix(const Eigen::MatrixXd& Z) const {
  if (static_cast<std::size_t>(Z.cols()) != layout_.size()) throw InvalidInput("model: design has wrong number of columns");
  Eigen::VectorXd out(Z.rows());
  if (family_ == Family::custom) {
    std::vector<double> row(Z.cols());
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
      for (Eigen::Index c = 0; c < Z.cols(); ++c) row[c] = Z(r, c);
      out[r] = predict_row(row);
    }
    return out;
  }
  Eigen::Map<const Eigen::VectorXd> b(coef_.data() + 1, static_cast<Eigen::Index>(coef_.size() - 1));
  Eigen::VectorXd eta = (Z * b).array() + coef_[0];
  for (Eigen::Index r = 0; r < eta.size(); ++r) out[r] = inverse_link(eta[r]);
  return out;
}

DerivativeResult PredictionModel::partial(std::size_t i, std::span<const double> d, std::span<const double> x) const {
  if (i >= layout_.n_protected) throw InvalidInput("partial: index is not a protected column");
  if (layout_.one_hot[i]) throw InvalidInput("partial: column '" + layout_.names[i] + "' is one-hot categorical");
  if (family_ == Family::custom) {
    std::vector<double> dd(d.begin(), d.end());
    double h = 1e-6 * std::max(1.0, std::abs(dd[i]));
    dd[i] = d[i] + h;
    double up = custom_(dd, x);
    dd[i] = d[i] - h;
    double dn = custom_(dd, x);
    return {(up - dn) / (2.0 * h), true};
  }
  double b = coef_[i + 1];
  switch (link_) {
    case Link::identity: return {b, false};
    case Link::log: return {b * predict(d, x), false};
    case Link::logit: {
      double mu = predict(d, x);
      return {b * mu * (1.0 - mu), false};
    }
  }
  return {};
}

DerivativeResult PredictionModel::partial_joint(std::size_t j, std::span<const double> d,
                                                std::span<const double> x) const {
  if (j < layout_.n_protected) return partial(j, d, x);
  if (j >= layout_.size()) throw InvalidInput("partial: coordinate out of range");
  std::size_t c = j - layout_.n_protected;
  if (family_ == Family::custom) {
    std::vector<double> xx(x.begin(), x.end());
    double h = 1e-6 * std::max(1.0, std::abs(xx[c]));
    xx[c] = x[c] + h;
    double up = custom_(d, xx);
    xx[c] = x[c] - h;
    double dn = custom_(d, xx);
    return {(up - dn) / (2.0 * h), true};
  }
  double b = coef_[j + 1];
  switch (link_) {
    case Link::identity: return {b, false};
    case Link::log: return {b * predict(d, x), false};
    case Link::logit: {
      double mu = predict(d, x);
      return {b * mu * (1.0 - mu), false};
    }
  }
  return {};
}

double PredictionModel::delta(std::size_t i, double from, double to, std::span<const double> d,
                              std::span<const double> x) const {
  if (i >= layout_.n_protected) throw InvalidInput("delta: index is not a protected column");
  const auto& lv = layout_.levels[i];
  if (!lv.empty()) {
    for (double t : {from, to})
      if (std::find(lv.begin(), lv.end(), t) == lv.end())
        throw InvalidInput("delta: level " + std::to_string(t) + " is not declared for '" + layout_.names[i] + "'");
  }
  std::vector<double> dd(d.begin(), d.end());
  dd[i] = from;
  double a = predict(dd, x);
  dd[i] = to;
  return a - predict(dd, x);
}

nlohmann::ordered_json PredictionModel::to_json() const {
  if (family_ == Family::custom) throw InvalidInput("custom models cannot be serialized");
  nlohmann::ordered_json j;
  j["format"] = "mfair.model";
  j["version"] = 1;
  j["family"] = to_string(family_);
  j["link"] = to_string(link_);
  j["power"] = power_;
  j["coefficients"] = coef_;
  j["feature_names"] = layout_.names;
  j["n_protected"] = layout_.n_protected;
  j["one_hot"] = layout_.one_hot;
  j["levels"] = layout_.levels;
  j["diagnostics"] = {{"optimizer", diagnostics.optimizer},
                      {"iterations", diagnostics.iterations},
                      {"gradient_norm", diagnostics.gradient_norm},
                      {"deviance", diagnostics.deviance},
                      {"converged", diagnostics.converged}};
  return j;
}

PredictionModel PredictionModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mfair.model") throw InvalidInput("not a model file");
    if (j.at("version").get<int>() != 1) throw InvalidInput("unsupported model version");
    FeatureLayout l;
    l.names = j.at("feature_names").get<std::vector<std::string>>();
    l.n_protected = j.at("n_protected").get<std::size_t>();
    l.one_hot = j.at("one_hot").get<std::vector<bool>>();
    l.levels = j.at("levels").get<std::vector<std::vector<double>>>();
    auto m = glm(family_from_string(j.at("family")), link_from_string(j.at("link")), j.at("power").get<double>(),
                 j.at("coefficients").get<std::vector<double>>(), l);
    const auto& dg = j.at("diagnostics");
    m.diagnostics.optimizer = dg.at("optimizer").get<std::string>();
    m.diagnostics.iterations = dg.at("iterations").get<std::size_t>();
    m.diagnostics.gradient_norm = dg.at("gradient_norm").get<double>();
    m.diagnostics.deviance = dg.at("deviance").get<double>();
    m.diagnostics.converged = dg.at("converged").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model json: ") + e.what());
  }
}

void Dataset::validate() const {
  if (Z.rows() != y.size()) throw InvalidInput("dataset: design and response differ in length");
  if (w.size() != 0 && w.size() != y.size()) throw InvalidInput("dataset: weights differ in length");
  if (static_cast<std::size_t>(Z.cols()) != layout.size()) throw InvalidInput("dataset: layout does not match design");
  if (y.size() == 0) throw InvalidInput("dataset: no rows");
  if (!Z.allFinite() || !y.allFinite()) throw InvalidInput("dataset: non-finite entries");
  if (w.size() && ((w.array() < 0.0).any() || !w.allFinite() || w.sum() <= 0.0))
    throw InvalidInput("dataset: weights must be non-negative with positive total");
}

namespace {

struct Glm {
  Family family;
  Link link;
  double power;

  double variance(double mu) const {
    switch (family) {
      case Family::gaussian: return 1.0;
      case Family::poisson: return mu;
      case Family::gamma: return mu * mu;
      case Family::tweedie: return std::pow(mu, power);
      case Family::binomial: return mu * (1.0 - mu);
      default: return 1.0;
    }
  }
  double mu(double eta) const {
    switch (link) {
      case Link::identity: return eta;
      case Link::log: return std::exp(std::clamp(eta, -700.0, 700.0));
      case Link::logit: return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
  }
  double dmu(double eta, double m) const {
    switch (link) {
      case Link::identity: return 1.0;
      case Link::log: return m;
      case Link::logit: return m * (1.0 - m);
    }
    (void)eta;
    return 1.0;
  }
  double eta_of(double m) const {
    switch (link) {
      case Link::identity: return m;
      case Link::log: return std::log(m);
      case Link::logit: return std::log(m / (1.0 - m));
    }
    return m;
  }
};

double unit_deviance(Family f, double p, double y, double mu) {
  switch (f) {
    case Family::gaussian: return (y - mu) * (y - mu);
    case Family::poisson: return 2.0 * ((y > 0 ? y * std::log(y / mu) : 0.0) - (y - mu));
    case Family::gamma: return 2.0 * (-std::log(y / mu) + (y - mu) / mu);
    case Family::tweedie:
      return 2.0 * (std::pow(y, 2.0 - p) / ((1.0 - p) * (2.0 - p)) - y * std::pow(mu, 1.0 - p) / (1.0 - p) +
                    std::pow(mu, 2.0 - p) / (2.0 - p));
    case Family::binomial: {
      double a = y > 0 ? y * std::log(y / mu) : 0.0;
      double b = y < 1 ? (1.0 - y) * std::log((1.0 - y) / (1.0 - mu)) : 0.0;
      return 2.0 * (a + b);
    }
    default: return 0.0;
  }
}

void check_response(Family f, double power, const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = y[i];
    bool ok = true;
    switch (f) {
      case Family::poisson: ok = v >= 0.0; break;
      case Family::tweedie: ok = v >= 0.0; break;
      case Family::gamma: ok = v > 0.0; break;
      case Family::binomial: ok = v >= 0.0 && v <= 1.0; break;
      default: break;
    }
    if (!ok) throw InvalidInput("fit: response value " + std::to_string(v) + " outside the support of the " + to_string(f) + " family");
  }
  if (f == Family::tweedie && !(power > 1.0 && power < 2.0)) throw InvalidInput("fit: tweedie power must lie in (1,2)");
}

struct State {
  Eigen::VectorXd eta, mu;
};

State evaluate_state(const Glm& g, const Eigen::MatrixXd& X1, const Eigen::VectorXd& beta) {
  State s;
  s.eta = X1 * beta;
  s.mu.resize(s.eta.size());
  for (Eigen::Index i = 0; i < s.eta.size(); ++i) s.mu[i] = g.mu(s.eta[i]);
  return s;
}

Eigen::VectorXd gradient(const Glm& g, const Eigen::MatrixXd& X1, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         const State& s) {
  Eigen::VectorXd r(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double m = s.mu[i];
    r[i] = -2.0 * w[i] * (y[i] - m) / g.variance(m) * g.dmu(s.eta[i], m);
  }
  return X1.transpose() * r / w.sum();
}

void check_rank(const Eigen::MatrixXd& X1, const Eigen::VectorXd& w, double ridge) {
  if (ridge > 0.0) return;
  Eigen::MatrixXd G = X1.transpose() * w.asDiagonal() * X1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  double mx = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(mx, 1e-300))
    throw SingularDesign("fit: design matrix is rank deficient (collinear columns)");
}

}  // namespace

double mean_deviance(Family family, double power, const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                     const Eigen::VectorXd& w) {
  KahanSum s, ws;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double wi = w.size() ? w[i] : 1.0;
    s.add(wi * unit_deviance(family, power, y[i], mu[i]));
    ws.add(wi);
  }
  return s.value() / ws.value();
}

PredictionModel fit_glm(const Dataset& data, Family family, Link link, double power, FitOptions opts) {
  data.validate();
  if (family == Family::custom) throw InvalidInput("fit: cannot fit a custom family");
  check_response(family, power, data.y);
  const Eigen::Index n = data.y.size(), p = data.Z.cols() + 1;
  Eigen::VectorXd w = data.w.size() ? data.w : Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd X1(n, p);
  X1.col(0).setOnes();
  X1.rightCols(p - 1) = data.Z;
  check_rank(X1, w, opts.ridge);

  Glm g{family, link, power};
  Optimizer opt = opts.optimizer.value_or(family == Family::tweedie ? Optimizer::adam : Optimizer::irls);

  double ybar = (data.y.array() * w.array()).sum() / w.sum();
  if (link == Link::log) ybar = std::max(ybar, 1e-8);
  if (link == Link::logit) ybar = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = g.eta_of(ybar);

  FitDiagnostics diag;
  double gnorm = INFINITY;
  if (opt == Optimizer::irls) {
    std::size_t max_iter = opts.max_iter ? opts.max_iter : 100;
    double tol = opts.tol > 0 ? opts.tol : 1e-8;
    diag.optimizer = "irls";
    const double lam = opts.ridge;
    auto penalty = [&](const Eigen::VectorXd& b) { return lam * b.tail(p - 1).squaredNorm(); };
    auto full_gradient = [&](const State& st, const Eigen::VectorXd& b) {
      Eigen::VectorXd gr = gradient(g, X1, data.y, w, st);
      gr.tail(p - 1) += 2.0 * lam * b.tail(p - 1);
      return gr;
    };
    State s = evaluate_state(g, X1, beta);
    double dev = mean_deviance(family, power, data.y, s.mu, w) + penalty(beta);
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
      gnorm = full_gradient(s, beta).norm();
      if (gnorm <= tol) break;
      Eigen::VectorXd W(n), z(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double m = s.mu[i], d = g.dmu(s.eta[i], m);
        d = std::copysign(std::max(std::abs(d), 1e-300), d);
        W[i] = w[i] * d * d / std::max(g.variance(m), 1e-300);
        z[i] = s.eta[i] + (data.y[i] - m) / d;
      }
      Eigen::MatrixXd A = X1.transpose() * W.asDiagonal() * X1;
      // mean deviance ~ sum W (z - eta)^2 / sum w
      A.diagonal().tail(p - 1).array() += lam * w.sum();
      Eigen::VectorXd rhs = X1.transpose() * (W.array() * z.array()).matrix();
      Eigen::VectorXd next = A.ldlt().solve(rhs);
      if (!next.allFinite()) throw NumericalError("fit: IRLS produced non-finite coefficients");
      // step halving keeps the deviance monotone
      Eigen::VectorXd step = next - beta;
      double scale = 1.0;
      for (int h = 0; h < 30; ++h) {
        Eigen::VectorXd cand = beta + scale * step;
        State sc = evaluate_state(g, X1, cand);
        double dc = mean_deviance(family, power, data.y, sc.mu, w) + penalty(cand);
        if (std::isfinite(dc) && dc <= dev + 1e-14 * std::abs(dev)) {
          beta = cand;
          s = std::move(sc);
          dev = dc;
          break;
        }
        scale *= 0.5;
      }
      if (scale < 1e-8) break;
    }
    gnorm = full_gradient(s, beta).norm();
    diag.iterations = it;
    diag.deviance = dev;
  } else {
    std::size_t max_iter = opts.max_iter ? opts.max_iter : 20000;
    double tol = opts.tol > 0 ? opts.tol : 1e-6;
    diag.optimizer = "adam";
    // Descend in standardized coordinates, report gradients in the original ones.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p), sd = Eigen::VectorXd::Ones(p);
    Eigen::MatrixXd Xs = X1;
    for (Eigen::Index c = 1; c < p; ++c) {
      double m = X1.col(c).mean();
      double v = (X1.col(c).array() - m).square().mean();
      mean[c] = m;
      sd[c] = v > 0 ? std::sqrt(v) : 1.0;
      Xs.col(c) = (X1.col(c).array() - m) / sd[c];
    }
    Eigen::VectorXd th = Eigen::VectorXd::Zero(p);
    th[0] = beta[0];
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(p), m2 = Eigen::VectorXd::Zero(p);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    State s = evaluate_state(g, Xs, th);
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
      Eigen::VectorXd gs = gradient(g, Xs, data.y, w, s);
      // same residuals against the original columns: x = sd * xs + mean
      Eigen::VectorXd go(p);
      go[0] = gs[0];
      for (Eigen::Index c = 1; c < p; ++c) {
        go[c] = sd[c] * gs[c] + mean[c] * gs[0];
        // ridge on the original-scale coefficients th[c] / sd[c]
        go[c] += 2.0 * opts.ridge * th[c] / sd[c];
        gs[c] += 2.0 * opts.ridge * th[c] / (sd[c] * sd[c]);
      }
      gnorm = go.norm();
      if (gnorm <= tol) break;
      m1 = b1 * m1 + (1 - b1) * gs;
      m2 = b2 * m2 + (1 - b2) * gs.cwiseProduct(gs);
      double c1 = 1.0 - std::pow(b1, static_cast<double>(it + 1));
      double c2 = 1.0 - std::pow(b2, static_cast<double>(it + 1));
      th -= opts.learning_rate * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps)).matrix();
      s = evaluate_state(g, Xs, th);
    }
    beta = th;
    for (Eigen::Index c = 1; c < p; ++c) {
      beta[c] = th[c] / sd[c];
      beta[0] -= th[c] * mean[c] / sd[c];
    }
    diag.iterations = it;
    diag.deviance = mean_deviance(family, power, data.y, s.mu, w);
  }
  diag.gradient_norm = gnorm;
  diag.converged = gnorm <= (opts.tol > 0 ? opts.tol : (opt == Optimizer::irls ? 1e-8 : 1e-6));
  if (!diag.converged)
    throw ConvergenceError("fit: " + diag.optimizer + " did not reach the gradient tolerance after " +
                               std::to_string(diag.iterations) + " iterations (gradient norm " +
                               std::to_string(gnorm) + ")",
                           gnorm);
  auto model = PredictionModel::glm(family, link, power, std::vector<double>(beta.data(), beta.data() + p), data.layout);
  model.diagnostics = diag;
  return model;
}

PredictionModel fit_quantile(const Dataset& data, double level, QuantileFitOptions opts) {
  data.validate();
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("quantile regression level must lie in (0,1)");
  const Eigen::Index n = data.y.size(), p = data.Z.cols() + 1;
  Eigen::VectorXd w = data.w.size() ? data.w : Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd Xs(n, p);
  Xs.col(0).setOnes();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p), sd = Eigen::VectorXd::Ones(p);
  for (Eigen::Index c = 1; c < p; ++c) {
    double m = data.Z.col(c - 1).mean();
    double v = (data.Z.col(c - 1).array() - m).square().mean();
    mean[c] = m;
    sd[c] = v > 0 ? std::sqrt(v) : 1.0;
    Xs.col(c) = (data.Z.col(c - 1).array() - m) / sd[c];
  }
  // response scaled to unit spread; pinball regression is scale equivariant
  double ys = std::sqrt((data.y.array() - data.y.mean()).square().mean());
  if (!(ys > 0)) ys = 1.0;
  Eigen::VectorXd y = data.y / ys;
  // start at the unconditional weighted quantile
  std::vector<double> yv(y.data(), y.data() + n), pv(n);
  double wsum = w.sum();
  for (Eigen::Index i = 0; i < n; ++i) pv[i] = w[i] / wsum;
  std::vector<std::size_t> ord(n);
  for (Eigen::Index i = 0; i < n; ++i) ord[i] = static_cast<std::size_t>(i);
  std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return yv[a] < yv[b]; });
  double acc = 0.0, q0 = yv[ord.back()];
  for (auto i : ord) {
    acc += pv[i];
    if (acc >= level) {
      q0 = yv[i];
      break;
    }
  }
  Eigen::VectorXd th = Eigen::VectorXd::Zero(p), m1 = th, m2 = th, avg = th;
  th[0] = q0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t avg_from = opts.iterations - std::min<std::size_t>(opts.iterations / 5, 1000);
  std::size_t navg = 0;
  Eigen::VectorXd r(n);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    Eigen::VectorXd q = Xs * th;
    for (Eigen::Index i = 0; i < n; ++i) r[i] = -w[i] * (level - (y[i] < q[i] ? 1.0 : 0.0));
    Eigen::VectorXd gs = Xs.transpose() * r / wsum;
    m1 = b1 * m1 + (1 - b1) * gs;
    m2 = b2 * m2 + (1 - b2) * gs.cwiseProduct(gs);
    double c1 = 1.0 - std::pow(b1, static_cast<double>(it + 1));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(it + 1));
    th -= opts.learning_rate * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps)).matrix();
    if (it >= avg_from) {
      avg += th;
      ++navg;
    }
  }
  if (navg) th = avg / static_cast<double>(navg);
  std::vector<double> beta(p);
  beta[0] = th[0];
  for (Eigen::Index c = 1; c < p; ++c) {
    beta[c] = th[c] / sd[c] * ys;
    beta[0] -= th[c] * mean[c] / sd[c];
  }
  beta[0] *= ys;
  auto model = PredictionModel::linear(beta, data.layout);
  model.diagnostics.optimizer = "adam-pinball";
  model.diagnostics.iterations = opts.iterations;
  model.diagnostics.converged = true;
  return model;
}

}  // namespace mfair
