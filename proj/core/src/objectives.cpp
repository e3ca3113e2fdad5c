#include "dcs/objectives.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dcs {

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// log(1 + exp(s)) without overflow for large s.
double log1p_exp(double s) {
  if (s > 0) return s + std::log1p(std::exp(-s));
  return std::log1p(std::exp(s));
}

}  // namespace

long Dataset::total_samples() const {
  long total = 0;
  for (const auto& d : samples) total += d.rows();
  return total;
}

LinregInstance gen_linreg(int node_count, int samples_per_node, int dimension,
                          double noise_variance, Rng& rng) {
  if (node_count < 1 || samples_per_node < 1 || dimension < 1)
    throw std::invalid_argument("gen_linreg: sizes must be positive");
  if (noise_variance < 0.0)
    throw std::invalid_argument("gen_linreg: noise_variance must be >= 0");

  LinregInstance inst;
  inst.data.kind = ObjectiveKind::linear;
  inst.planted_x = Eigen::VectorXd::NullaryExpr(
      dimension, [&](Eigen::Index) { return rng.normal(); });

  const double noise_std = std::sqrt(noise_variance);
  for (int i = 0; i < node_count; ++i) {
    Eigen::MatrixXd d(samples_per_node, dimension);
    for (int r = 0; r < samples_per_node; ++r) {
      double sum = 0.0;
      do {
        for (int c = 0; c < dimension; ++c) d(r, c) = rng.normal();
        sum = d.row(r).sum();
      } while (sum == 0.0);  // probability-zero draw, redrawn explicitly
      d.row(r) /= sum;
    }
    Eigen::VectorXd noise = Eigen::VectorXd::NullaryExpr(
        samples_per_node, [&](Eigen::Index) { return noise_std * rng.normal(); });
    inst.data.targets.push_back(d * inst.planted_x + noise);
    inst.data.samples.push_back(std::move(d));
  }
  return inst;
}

Dataset gen_logreg(int node_count, int samples_per_node, int dimension,
                   double mu_reg, Rng& rng) {
  if (node_count < 1 || samples_per_node < 1 || dimension < 1)
    throw std::invalid_argument("gen_logreg: sizes must be positive");
  if (mu_reg <= 0.0)
    throw std::invalid_argument("gen_logreg: mu_reg must be > 0 for strong convexity");

  Dataset data;
  data.kind = ObjectiveKind::logistic;
  data.mu_reg = mu_reg;

  Eigen::VectorXd separator = Eigen::VectorXd::NullaryExpr(
      dimension, [&](Eigen::Index) { return rng.normal(); });
  for (int i = 0; i < node_count; ++i) {
    Eigen::MatrixXd d(samples_per_node, dimension);
    Eigen::VectorXd labels(samples_per_node);
    for (int r = 0; r < samples_per_node; ++r) {
      do {
        for (int c = 0; c < dimension; ++c) d(r, c) = rng.normal();
      } while (d.row(r).norm() == 0.0);
      d.row(r) /= d.row(r).norm();
      double margin = d.row(r).dot(separator);
      double label = margin >= 0.0 ? 1.0 : -1.0;
      if (rng.uniform() < 0.10) label = -label;  // 10% label noise
      labels[r] = label;
    }
    data.samples.push_back(std::move(d));
    data.targets.push_back(std::move(labels));
  }
  return data;
}

double component_value(const Dataset& data, int node, int sample,
                       const Eigen::VectorXd& x) {
  const auto row = data.samples[node].row(sample);
  const double target = data.targets[node][sample];
  if (data.kind == ObjectiveKind::linear) {
    const double r = target - row.dot(x);
    return r * r;
  }
  return 0.5 * data.mu_reg * x.squaredNorm() + log1p_exp(-target * row.dot(x));
}

Eigen::VectorXd component_grad(const Dataset& data, int node, int sample,
                               const Eigen::VectorXd& x) {
  const auto row = data.samples[node].row(sample);
  const double target = data.targets[node][sample];
  if (data.kind == ObjectiveKind::linear)
    return 2.0 * (row.dot(x) - target) * row.transpose();
  const double s = sigmoid(-target * row.dot(x));
  return data.mu_reg * x - target * s * row.transpose();
}

Eigen::VectorXd local_full_grad(const Dataset& data, int node,
                                const Eigen::VectorXd& x) {
  const int m = data.sample_count(node);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (int j = 0; j < m; ++j) g += component_grad(data, node, j, x);
  return g / m;
}

double local_value(const Dataset& data, int node, const Eigen::VectorXd& x) {
  const int m = data.sample_count(node);
  double v = 0.0;
  for (int j = 0; j < m; ++j) v += component_value(data, node, j, x);
  return v / m;
}

double objective_value(const Dataset& data, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (int i = 0; i < data.node_count(); ++i) v += local_value(data, i, x);
  return v / data.node_count();
}

Eigen::VectorXd objective_grad(const Dataset& data, const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (int i = 0; i < data.node_count(); ++i) g += local_full_grad(data, i, x);
  return g / data.node_count();
}

namespace {

// Global Hessian of the linear objective: (2/n) sum_i (1/m_i) D_i^T D_i.
Eigen::MatrixXd linear_hessian(const Dataset& data) {
  const int d = data.dimension();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < data.node_count(); ++i)
    h += (2.0 / data.sample_count(i)) * data.samples[i].transpose() *
         data.samples[i];
  return h / data.node_count();
}

}  // namespace

ObjectiveConstants constants(const Dataset& data) {
  ObjectiveConstants c;
  double max_row_sq = 0.0;
  for (int i = 0; i < data.node_count(); ++i)
    max_row_sq =
        std::max(max_row_sq, data.samples[i].rowwise().squaredNorm().maxCoeff());

  if (data.kind == ObjectiveKind::linear) {
    c.smoothness = 2.0 * max_row_sq;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(linear_hessian(data));
    c.strong_convexity = solver.eigenvalues().minCoeff();
    if (c.strong_convexity <= 0.0)
      throw std::runtime_error(
          "constants: dataset is not strongly convex (rank-deficient data)");
  } else {
    c.smoothness = 0.25 * max_row_sq + data.mu_reg;
    c.strong_convexity = data.mu_reg;
  }
  c.condition_number = c.smoothness / c.strong_convexity;
  return c;
}

OptimumCertificate centralized_optimum(const Dataset& data, double tolerance,
                                       long budget) {
  OptimumCertificate cert;
  if (data.kind == ObjectiveKind::linear) {
    const int d = data.dimension();
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < data.node_count(); ++i) {
      const double w = 1.0 / data.sample_count(i);
      lhs += w * data.samples[i].transpose() * data.samples[i];
      rhs += w * data.samples[i].transpose() * data.targets[i];
    }
    cert.x_star = lhs.ldlt().solve(rhs);
    // One Newton-style polish via the same factorization tightens the
    // residual for ill-conditioned instances.
    cert.x_star -=
        lhs.ldlt().solve(lhs * cert.x_star - rhs);
    cert.gradient_norm = objective_grad(data, cert.x_star).norm();
    return cert;
  }

  const ObjectiveConstants c = constants(data);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(data.dimension());
  const double step = 1.0 / c.smoothness;
  for (long it = 0; it < budget; ++it) {
    Eigen::VectorXd g = objective_grad(data, x);
    const double gnorm = g.norm();
    if (gnorm <= tolerance) {
      cert.x_star = x;
      cert.gradient_norm = gnorm;
      return cert;
    }
    x -= step * g;
  }
  throw std::runtime_error("centralized_optimum: iteration budget exhausted");
}

void write_dataset_csv(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int i = 0; i < data.node_count(); ++i) {
    std::ofstream out(fs::path(dir) / ("data_node" + std::to_string(i) + ".csv"));
    if (!out) throw std::runtime_error("write_dataset_csv: cannot open output");
    char buf[64];
    for (int r = 0; r < data.sample_count(i); ++r) {
      for (int c = 0; c < data.dimension(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", data.samples[i](r, c));
        out << buf << ',';
      }
      std::snprintf(buf, sizeof buf, "%.17g", data.targets[i][r]);
      out << buf << '\n';
    }
  }
  nlohmann::json meta;
  meta["kind"] = data.kind == ObjectiveKind::linear ? "linear" : "logistic";
  meta["mu_reg"] = data.mu_reg;
  meta["nodes"] = data.node_count();
  std::ofstream meta_out(fs::path(dir) / "dataset_meta.json");
  meta_out << meta.dump(2) << '\n';
}

Dataset read_dataset_csv(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "dataset_meta.json");
  if (!meta_in) throw std::runtime_error("read_dataset_csv: missing dataset_meta.json");
  nlohmann::json meta = nlohmann::json::parse(meta_in);

  Dataset data;
  data.kind = meta.at("kind").get<std::string>() == "linear"
                  ? ObjectiveKind::linear
                  : ObjectiveKind::logistic;
  data.mu_reg = meta.at("mu_reg").get<double>();
  const int nodes = meta.at("nodes").get<int>();

  for (int i = 0; i < nodes; ++i) {
    std::ifstream in(fs::path(dir) / ("data_node" + std::to_string(i) + ".csv"));
    if (!in) throw std::runtime_error("read_dataset_csv: missing node file");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      const char* ptr = line.c_str();
      char* end = nullptr;
      while (*ptr) {
        row.push_back(std::strtod(ptr, &end));
        ptr = (*end == ',') ? end + 1 : end;
      }
      rows.push_back(std::move(row));
    }
    const int m = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows.front().size()) - 1;
    Eigen::MatrixXd samples(m, d);
    Eigen::VectorXd targets(m);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < d; ++c) samples(r, c) = rows[r][c];
      targets[r] = rows[r][d];
    }
    data.samples.push_back(std::move(samples));
    data.targets.push_back(std::move(targets));
  }
  return data;
}

}  // namespace dcs
