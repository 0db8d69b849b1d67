#include "collafuse/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace collafuse {

namespace {
constexpr uint64_t kProjSeed = 0xFEA7BEDull;
constexpr Scalar kPsdTol = 1e-9;
}  // namespace

MatrixX feature_embed(const Tensor& batch) {
  if (batch.ndim() < 1 || batch.shape()[0] == 0) throw EmptyBatch("feature_embed: empty batch");
  const Index n = batch.shape()[0];
  const Index d = batch.size() / n;
  Eigen::Map<const RowMatrixX> flat(batch.data().data(), n, d);

  // fixed projection, deterministic in the flattened width only
  Rng rng(kProjSeed ^ splitmix64(static_cast<uint64_t>(d)));
  MatrixX proj(d, kEmbedProjDims);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < kEmbedProjDims; ++j) proj(i, j) = rng.normal();
  proj /= std::sqrt(static_cast<Scalar>(d));

  MatrixX out(n, d + kEmbedProjDims);
  out.leftCols(d) = flat;
  out.rightCols(kEmbedProjDims) = flat * proj;
  return out;
}

FeatureStats FeatureStats::from(const MatrixX& rows) {
  if (rows.rows() < 1) throw EmptyBatch("FeatureStats: no rows");
  FeatureStats s;
  s.n = rows.rows();
  s.mean = rows.colwise().mean();
  MatrixX centered = rows.rowwise() - s.mean.transpose();
  const Scalar denom = s.n > 1 ? static_cast<Scalar>(s.n - 1) : 1.0;
  s.cov = centered.transpose() * centered / denom;
  s.cov = ((s.cov + s.cov.transpose()) / 2.0).eval();
  return s;
}

MatrixX psd_sqrt(const MatrixX& m) {
  Eigen::SelfAdjointEigenSolver<MatrixX> es(m);
  if (es.info() != Eigen::Success) throw NonPSD("eigendecomposition failed");
  VectorX ev = es.eigenvalues();
  const Scalar scale = std::max<Scalar>(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -kPsdTol * scale)
    throw NonPSD("matrix eigenvalue " + std::to_string(ev.minCoeff()) +
                 " below clamping tolerance");
  VectorX root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Scalar frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size()) throw DimMismatch("frechet_distance: dimension mismatch");
  const MatrixX sa = psd_sqrt(a.cov);
  MatrixX inner = sa * b.cov * sa;
  inner = ((inner + inner.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<MatrixX> es(inner);
  if (es.info() != Eigen::Success) throw NonPSD("eigendecomposition failed");
  VectorX ev = es.eigenvalues();
  const Scalar scale = std::max<Scalar>(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -kPsdTol * scale * scale)
    throw NonPSD("product matrix far from PSD");
  const Scalar tr_sqrt = ev.cwiseMax(0.0).cwiseSqrt().sum();
  const Scalar fd = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max<Scalar>(fd, 0.0);
}

Scalar frechet_distance(const Tensor& a, const Tensor& b) {
  return frechet_distance(FeatureStats::from(feature_embed(a)),
                          FeatureStats::from(feature_embed(b)));
}

Scalar ProbeResult::mean_f1() const {
  if (f1.empty()) return 0.0;
  Scalar s = 0.0;
  for (Scalar v : f1) s += v;
  return s / static_cast<Scalar>(f1.size());
}

namespace {

// multinomial logistic regression, full-batch gradient descent, zero init
std::vector<int> probe_predict(const MatrixX& train_x, const std::vector<int>& train_y,
                               const MatrixX& test_x, int classes) {
  const Index n = train_x.rows(), d = train_x.cols();
  MatrixX w = MatrixX::Zero(d, classes);
  VectorX bias = VectorX::Zero(classes);
  const Scalar lr = 0.5, l2 = 1e-3;
  const int iters = 300;
  for (int it = 0; it < iters; ++it) {
    MatrixX logits = (train_x * w).rowwise() + bias.transpose();
    MatrixX p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    for (Index i = 0; i < n; ++i) p(i, train_y[static_cast<size_t>(i)]) -= 1.0;
    p /= static_cast<Scalar>(n);
    w -= lr * (train_x.transpose() * p + l2 * w);
    bias -= lr * p.colwise().sum().transpose();
  }
  std::vector<int> pred(static_cast<size_t>(test_x.rows()));
  MatrixX logits = (test_x * w).rowwise() + bias.transpose();
  for (Index i = 0; i < test_x.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    pred[static_cast<size_t>(i)] = static_cast<int>(arg);
  }
  return pred;
}

// macro F1 over classes present in the reference labels
Scalar macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  Scalar total = 0.0;
  int counted = 0;
  for (int c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
      const bool is_c = truth[i] == c, pred_c = pred[i] == c;
      tp += is_c && pred_c;
      fp += !is_c && pred_c;
      fn += is_c && !pred_c;
    }
    if (tp + fn == 0) continue;  // class absent from the held-out set
    const Scalar denom = static_cast<Scalar>(2 * tp + fp + fn);
    total += denom > 0 ? 2.0 * static_cast<Scalar>(tp) / denom : 0.0;
    counted += 1;
  }
  return counted ? total / static_cast<Scalar>(counted) : 0.0;
}

}  // namespace

ProbeResult attribute_probe(const Tensor& intermediates,
                            const std::vector<std::vector<int>>& attrs,
                            const std::vector<int>& attr_cardinality, Scalar split,
                            uint64_t seed) {
  if (!(split > 0.0 && split < 1.0)) throw BadParams("attribute_probe: split must lie in (0,1)");
  MatrixX embed = feature_embed(intermediates);
  const Index n = embed.rows();
  if (static_cast<size_t>(n) != attrs.size())
    throw DimMismatch("attribute_probe: one attribute row per sample");

  // deterministic shuffle and split
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  const Index n_train = std::max<Index>(1, static_cast<Index>(std::floor(split * static_cast<Scalar>(n))));
  if (n_train >= n) throw BadParams("attribute_probe: split leaves no held-out rows");

  // standardize with training statistics
  MatrixX train(n_train, embed.cols()), test(n - n_train, embed.cols());
  for (Index i = 0; i < n_train; ++i) train.row(i) = embed.row(order[static_cast<size_t>(i)]);
  for (Index i = n_train; i < n; ++i) test.row(i - n_train) = embed.row(order[static_cast<size_t>(i)]);
  VectorX mu = train.colwise().mean();
  VectorX sd = ((train.rowwise() - mu.transpose()).array().square().colwise().sum() /
                std::max<Scalar>(1.0, static_cast<Scalar>(n_train - 1)))
                   .sqrt()
                   .matrix();
  for (Index j = 0; j < sd.size(); ++j) sd[j] = std::max<Scalar>(sd[j], 1e-8);
  train = (train.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
  test = (test.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();

  ProbeResult result;
  for (size_t a = 0; a < attr_cardinality.size(); ++a) {
    const int classes = attr_cardinality[a];
    std::vector<int> train_y(static_cast<size_t>(n_train)), test_y(static_cast<size_t>(n - n_train));
    for (Index i = 0; i < n_train; ++i) train_y[static_cast<size_t>(i)] = attrs[static_cast<size_t>(order[static_cast<size_t>(i)])][a];
    for (Index i = n_train; i < n; ++i) test_y[static_cast<size_t>(i - n_train)] = attrs[static_cast<size_t>(order[static_cast<size_t>(i)])][a];
    int distinct = 0;
    for (int c = 0; c < classes; ++c)
      distinct += std::count(train_y.begin(), train_y.end(), c) > 0;
    if (distinct < 2) throw DegenerateLabels("attribute " + std::to_string(a) +
                                             " has fewer than two classes in the training split");
    std::vector<int> pred = probe_predict(train, train_y, test, classes);
    result.f1.push_back(macro_f1(test_y, pred, classes));
  }
  return result;
}

InversionResult inversion_attack(ClientNode& attacker, const Dataset& victim_data,
                                 ServerNode& server, Index count, uint64_t seed) {
  if (attacker.cut != server.cut || attacker.schedule.T() != server.schedule.T())
    throw ConfigMismatch("inversion_attack: attacker and server disagree on the session");
  if (count < 1) throw EmptyBatch("inversion_attack: count must be positive");

  // attacker-flavoured requests: labels drawn from its own shard
  Rng rng(seed);
  std::vector<int> labels(static_cast<size_t>(count));
  const Index n = attacker.data.size();
  for (auto& l : labels)
    l = attacker.data.label_of(static_cast<Index>(rng.uniform_int(0, n - 1)));

  InferenceRequest req{labels, static_cast<int>(count), rng.next_u64(), attacker.id};
  InferenceResponse resp = server_infer_intermediate(server, req);
  Tensor recon = client_finish(attacker, resp, labels);

  InversionResult out;
  out.attacker = attacker.id;
  out.cut = attacker.cut;
  out.cross_fd = frechet_distance(recon, victim_data.x);
  out.self_fd = frechet_distance(recon, attacker.data.x);
  return out;
}

}  // namespace collafuse
