#include "mlvae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <svm.h>

#include "mlvae/errors.hpp"
#include "mlvae/exact_sum.hpp"
#include "mlvae/objectives.hpp"

namespace mlvae {

// ------------------------------------------------------------------ latents

Latents extract_latents(Encoder& encoder, const Matrix& pixels, std::vector<int> labels, Index batch_size) {
  if (!labels.empty() && static_cast<Index>(labels.size()) != pixels.rows()) {
    throw ShapeError("extract_latents: label count does not match the number of images");
  }
  const auto& cfg = encoder.config();
  Latents out;
  out.content.resize(pixels.rows(), cfg.content_dim);
  out.style.resize(pixels.rows(), cfg.style_dim);
  for (Index start = 0; start < pixels.rows(); start += batch_size) {
    const Index n = std::min(batch_size, pixels.rows() - start);
    const EncoderBatch enc = encoder.forward(pixels.middleRows(start, n));
    out.content.middleRows(start, n) = enc.content_mean.cast<double>();
    out.style.middleRows(start, n) = enc.style_mean.cast<double>();
  }
  out.labels = std::move(labels);
  return out;
}

Latents extract_latents(Encoder& encoder, const DatasetSplits& splits, std::span<const Observation> observations,
                        Index batch_size) {
  return extract_latents(encoder, splits.materialize(observations), splits.labels(observations), batch_size);
}

// ------------------------------------------------------------------ classifiers

ClassifierKind parse_classifier(std::string_view name) {
  if (name == "svm") return ClassifierKind::svm;
  if (name == "logistic") return ClassifierKind::logistic;
  throw ArgumentError("classifier must be 'svm' or 'logistic', got '" + std::string(name) + "'");
}

std::string_view to_string(ClassifierKind kind) { return kind == ClassifierKind::svm ? "svm" : "logistic"; }

namespace {

void silent_print(const char*) {}

class SvmClassifier final : public Classifier {
 public:
  SvmClassifier(const MatrixXd& x, std::span<const int> y, const ClassifierOptions& options) : dim_(x.cols()) {
    const Index n = x.rows();
    nodes_.resize(static_cast<std::size_t>(n * (dim_ + 1)));
    rows_.resize(static_cast<std::size_t>(n));
    targets_.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      svm_node* row = &nodes_[static_cast<std::size_t>(i * (dim_ + 1))];
      fill(x.row(i), row);
      rows_[static_cast<std::size_t>(i)] = row;
      targets_[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)];
    }
    svm_problem problem{};
    problem.l = static_cast<int>(n);
    problem.y = targets_.data();
    problem.x = rows_.data();

    double gamma = options.svm_gamma;
    if (gamma <= 0.0) {
      const double mean = x.mean();
      const double var = (x.array() - mean).square().mean();
      gamma = var > 0.0 ? 1.0 / (static_cast<double>(dim_) * var) : 1.0;
    }
    svm_parameter param{};
    param.svm_type = C_SVC;
    param.kernel_type = RBF;
    param.gamma = gamma;
    param.cache_size = 200;
    param.eps = 1e-3;
    param.C = options.svm_c;
    param.shrinking = 1;
    param.probability = 0;
    if (const char* err = svm_check_parameter(&problem, &param)) throw ArgumentError(std::string("svm: ") + err);
    svm_set_print_string_function(&silent_print);
    model_ = svm_train(&problem, &param);
  }

  ~SvmClassifier() override { svm_free_and_destroy_model(&model_); }
  SvmClassifier(const SvmClassifier&) = delete;
  SvmClassifier& operator=(const SvmClassifier&) = delete;

  std::vector<int> predict(const MatrixXd& features) const override {
    if (features.cols() != dim_) throw ShapeError("classifier: feature width differs from training");
    std::vector<svm_node> row(static_cast<std::size_t>(dim_ + 1));
    std::vector<int> out(static_cast<std::size_t>(features.rows()));
    for (Index i = 0; i < features.rows(); ++i) {
      fill(features.row(i), row.data());
      out[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(svm_predict(model_, row.data())));
    }
    return out;
  }

 private:
  void fill(const Eigen::Ref<const Eigen::RowVectorXd>& x, svm_node* row) const {
    for (Index d = 0; d < dim_; ++d) row[d] = {static_cast<int>(d + 1), x[d]};
    row[dim_] = {-1, 0.0};
  }

  Index dim_;
  std::vector<svm_node> nodes_;
  std::vector<svm_node*> rows_;
  std::vector<double> targets_;
  svm_model* model_ = nullptr;  // references nodes_
};

/// Multinomial logistic regression on standardized features, fitted by
/// accelerated full-batch gradient descent with a small L2 penalty.
class LogisticClassifier final : public Classifier {
 public:
  LogisticClassifier(const MatrixXd& x, std::span<const int> y, const ClassifierOptions& options) {
    classes_ = std::vector<int>(y.begin(), y.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    const Index n = x.rows(), d = x.cols(), k = static_cast<Index>(classes_.size());

    mean_ = x.colwise().mean();
    scale_ = ((x.rowwise() - mean_).array().square().colwise().mean()).sqrt();
    for (Index j = 0; j < d; ++j) {
      if (!(scale_[j] > 0.0)) scale_[j] = 1.0;
    }
    MatrixXd z(n, d + 1);
    z.leftCols(d) = standardize(x);
    z.col(d).setOnes();
    MatrixXd onehot = MatrixXd::Zero(n, k);
    for (Index i = 0; i < n; ++i) onehot(i, class_index(y[static_cast<std::size_t>(i)])) = 1.0;

    const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(z.transpose() * z / static_cast<double>(n))
                            .eigenvalues()
                            .maxCoeff();
    const double step = 1.0 / (0.5 * lmax + options.logistic_l2);
    weights_ = MatrixXd::Zero(d + 1, k);
    MatrixXd previous = weights_;
    for (int it = 1; it <= options.logistic_iterations; ++it) {
      const MatrixXd look = weights_ + (static_cast<double>(it - 1) / (it + 2)) * (weights_ - previous);
      MatrixXd p = softmax(z * look);
      MatrixXd grad = z.transpose() * (p - onehot) / static_cast<double>(n);
      grad.topRows(d) += options.logistic_l2 * look.topRows(d);
      previous = weights_;
      weights_ = look - step * grad;
    }
  }

  std::vector<int> predict(const MatrixXd& features) const override {
    if (features.cols() != mean_.size()) throw ShapeError("classifier: feature width differs from training");
    const Index d = features.cols();
    const MatrixXd scores = standardize(features) * weights_.topRows(d) +
                            Eigen::VectorXd::Ones(features.rows()) * weights_.row(d);
    std::vector<int> out(static_cast<std::size_t>(features.rows()));
    for (Index i = 0; i < features.rows(); ++i) {
      Index best = 0;
      scores.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = classes_[static_cast<std::size_t>(best)];
    }
    return out;
  }

 private:
  MatrixXd standardize(const MatrixXd& x) const {
    return ((x.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
  }

  static MatrixXd softmax(MatrixXd s) {
    for (Index i = 0; i < s.rows(); ++i) {
      s.row(i).array() -= s.row(i).maxCoeff();
      s.row(i) = s.row(i).array().exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    return s;
  }

  Index class_index(int label) const {
    return std::lower_bound(classes_.begin(), classes_.end(), label) - classes_.begin();
  }

  std::vector<int> classes_;
  Eigen::RowVectorXd mean_, scale_;
  MatrixXd weights_;
};

}  // namespace

std::unique_ptr<Classifier> fit_classifier(const MatrixXd& features, std::span<const int> labels,
                                           const ClassifierOptions& options) {
  if (features.rows() != static_cast<Index>(labels.size())) {
    throw ShapeError("classifier: feature rows and labels differ in length");
  }
  if (features.cols() < 1) throw ShapeError("classifier: features need at least one column");
  if (!features.allFinite()) throw ArgumentError("classifier: features must be finite");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ArgumentError("classifier needs at least two distinct classes");
  if (options.kind == ClassifierKind::svm) return std::make_unique<SvmClassifier>(features, labels, options);
  return std::make_unique<LogisticClassifier>(features, labels, options);
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw ArgumentError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double downstream_accuracy(const MatrixXd& train_features, std::span<const int> train_labels,
                           const MatrixXd& test_features, std::span<const int> test_labels,
                           const ClassifierOptions& options) {
  if (train_features.cols() != test_features.cols()) {
    throw ShapeError("downstream_accuracy: train and test feature widths differ");
  }
  if (test_features.rows() != static_cast<Index>(test_labels.size())) {
    throw ShapeError("downstream_accuracy: test rows and labels differ in length");
  }
  const auto clf = fit_classifier(train_features, train_labels, options);
  return accuracy(clf->predict(test_features), test_labels);
}

// ------------------------------------------------------------------ reconstruction

namespace {

Matrix posterior_mean_latents(const EncoderBatch& enc) {
  Matrix z(enc.rows(), enc.content_mean.cols() + enc.style_mean.cols());
  z << enc.content_mean, enc.style_mean;
  return z;
}

}  // namespace

double reconstruction_error(Encoder& encoder, Decoder& decoder, const Matrix& pixels, Index batch_size) {
  if (pixels.rows() == 0) throw ArgumentError("reconstruction_error of an empty set");
  ExactSum total;
  for (Index start = 0; start < pixels.rows(); start += batch_size) {
    const Index n = std::min(batch_size, pixels.rows() - start);
    const Matrix x = pixels.middleRows(start, n);
    const Matrix logits = decoder.forward(posterior_mean_latents(encoder.forward(x)));
    for (Index i = 0; i < n; ++i) {
      total.add(-bernoulli_log_likelihood({x.row(i).data(), static_cast<std::size_t>(x.cols())},
                                          {logits.row(i).data(), static_cast<std::size_t>(logits.cols())}));
    }
  }
  return total.value() / static_cast<double>(pixels.rows());
}

// ------------------------------------------------------------------ grids

RgbImage ImageGrid::render(Index gap) const {
  return tile_grid({tiles.data(), static_cast<std::size_t>(tiles.size())}, rows, cols, height, width, gap);
}

ImageGrid swap_grid(Encoder& encoder, Decoder& decoder, const Matrix& row_images, const Matrix& col_images) {
  const Index m = row_images.rows(), n = col_images.rows();
  if (m < 1 || n < 1) throw ArgumentError("swap_grid needs at least one row and one column image");
  const auto& cfg = encoder.config();
  if (cfg.channels != 1) throw ArgumentError("swap_grid renders single-channel images only");
  const EncoderBatch rows = encoder.forward(row_images);
  const EncoderBatch cols = encoder.forward(col_images);

  Matrix latents(m * n, cfg.latent_dim());
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      latents.row(i * n + j) << cols.content_mean.row(j), rows.style_mean.row(i);
    }
  }
  const Matrix decoded = sigmoid(decoder.forward(latents));

  ImageGrid grid;
  grid.rows = m + 1;
  grid.cols = n + 1;
  grid.height = cfg.height;
  grid.width = cfg.width;
  grid.tiles = Matrix::Zero(grid.rows * grid.cols, cfg.input_dim());
  for (Index j = 0; j < n; ++j) grid.tiles.row(j + 1) = col_images.row(j);
  for (Index i = 0; i < m; ++i) {
    grid.tiles.row((i + 1) * grid.cols) = row_images.row(i);
    for (Index j = 0; j < n; ++j) grid.tiles.row((i + 1) * grid.cols + j + 1) = decoded.row(i * n + j);
  }
  return grid;
}

double column_purity(const ImageGrid& grid, Encoder& encoder, const Classifier& content_classifier) {
  const Index m = grid.rows - 1, n = grid.cols - 1;
  if (m < 1 || n < 1) throw ArgumentError("column_purity needs a grid with interior cells");
  Matrix interior(m * n, grid.tiles.cols());
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) interior.row(i * n + j) = grid.tiles.row((i + 1) * grid.cols + j + 1);
  }
  const Latents lat = extract_latents(encoder, interior, {});
  const std::vector<int> predicted = content_classifier.predict(lat.content);
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    std::map<int, Index> counts;
    for (Index i = 0; i < m; ++i) ++counts[predicted[static_cast<std::size_t>(i * n + j)]];
    Index best = 0;
    for (const auto& [label, count] : counts) best = std::max(best, count);
    total += static_cast<double>(best) / static_cast<double>(m);
  }
  return total / static_cast<double>(n);
}

ImageGrid latent_traversal(Encoder& encoder, Decoder& decoder, std::span<const Real> image_a,
                           std::span<const Real> image_b, int steps) {
  if (steps < 2) throw ArgumentError("latent_traversal needs steps >= 2");
  const auto& cfg = encoder.config();
  const auto d = static_cast<Index>(image_a.size());
  if (d != cfg.input_dim() || static_cast<Index>(image_b.size()) != d) {
    throw ShapeError("latent_traversal: image size does not match the model");
  }
  Matrix pair(2, d);
  pair.row(0) = Eigen::Map<const RowVector>(image_a.data(), d);
  pair.row(1) = Eigen::Map<const RowVector>(image_b.data(), d);
  const EncoderBatch enc = encoder.forward(pair);

  Matrix latents(static_cast<Index>(steps) * steps, cfg.latent_dim());
  for (int r = 0; r < steps; ++r) {
    const Real ts = static_cast<Real>(r) / static_cast<Real>(steps - 1);
    for (int q = 0; q < steps; ++q) {
      const Real tc = static_cast<Real>(q) / static_cast<Real>(steps - 1);
      const RowVector c = enc.content_mean.row(0) + tc * (enc.content_mean.row(1) - enc.content_mean.row(0));
      const RowVector s = enc.style_mean.row(0) + ts * (enc.style_mean.row(1) - enc.style_mean.row(0));
      latents.row(static_cast<Index>(r) * steps + q) << c, s;
    }
  }
  ImageGrid grid;
  grid.rows = steps;
  grid.cols = steps;
  grid.height = cfg.height;
  grid.width = cfg.width * cfg.channels;
  grid.tiles = sigmoid(decoder.forward(latents));
  return grid;
}

// ------------------------------------------------------------------ report

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["dataset"] = dataset;
  j["classifier"] = classifier;
  j["content_accuracy"] = content_accuracy;
  j["style_accuracy"] = style_accuracy;
  j["recon_nll"] = recon_nll;
  nlohmann::ordered_json variants_json = nlohmann::ordered_json::object();
  for (const auto& [name, v] : variants) {
    variants_json[name] = {{"content_accuracy", v.content_accuracy}, {"style_accuracy", v.style_accuracy}};
  }
  j["variants"] = variants_json;
  if (swap_column_purity >= 0.0) j["swap_column_purity"] = swap_column_purity;
  j["split_hashes"] = split_hashes;
  j["artifacts"] = artifact_paths;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.run_id = j.at("run_id").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.classifier = j.at("classifier").get<std::string>();
  r.content_accuracy = j.at("content_accuracy").get<double>();
  r.style_accuracy = j.at("style_accuracy").get<double>();
  r.recon_nll = j.at("recon_nll").get<double>();
  for (const auto& [name, v] : j.at("variants").items()) {
    r.variants[name] = {v.at("content_accuracy").get<double>(), v.at("style_accuracy").get<double>()};
  }
  r.swap_column_purity = j.value("swap_column_purity", -1.0);
  r.split_hashes = j.value("split_hashes", std::map<std::string, std::string>{});
  r.artifact_paths = j.value("artifacts", std::map<std::string, std::string>{});
  return r;
}

namespace {

std::set<std::int64_t> source_ids(const ImageStore& store, std::span<const Observation> obs) {
  std::set<std::int64_t> ids;
  for (const auto& o : obs) ids.insert(store.source_ids[static_cast<std::size_t>(o.image)]);
  return ids;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<Observation> flatten(const std::vector<ObservationGroup>& groups) {
  std::vector<Observation> out;
  for (const auto& g : groups) out.insert(out.end(), g.members.begin(), g.members.end());
  return out;
}

}  // namespace

void check_split_disjointness(const DatasetSplits& splits) {
  const ImageStore& store = *splits.store;
  const auto model = flatten(splits.model_train);
  const std::vector<std::pair<std::string, std::set<std::int64_t>>> sets{
      {"model_train", source_ids(store, model)},
      {"classifier_train", source_ids(store, splits.classifier_train)},
      {"eval_test", source_ids(store, splits.eval_test)}};
  const std::uint64_t hashes[3] = {split_hash(store, model), split_hash(store, splits.classifier_train),
                                   split_hash(store, splits.eval_test)};
  for (std::size_t a = 0; a < sets.size(); ++a) {
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      if (hashes[a] == hashes[b]) {
        throw StateError("split hashes of " + sets[a].first + " and " + sets[b].first + " collide");
      }
      for (auto id : sets[a].second) {
        if (sets[b].second.contains(id)) {
          throw StateError(sets[a].first + " and " + sets[b].first + " share source image " + std::to_string(id));
        }
      }
    }
  }
}

EvalReport evaluate(Encoder& encoder, Decoder& decoder, const DatasetSplits& splits, const EvalOptions& options) {
  check_split_disjointness(splits);
  const ImageStore& store = *splits.store;

  EvalReport report;
  report.run_id = options.run_id;
  report.dataset = splits.params.dataset;
  report.classifier = std::string(to_string(options.classifier.kind));
  report.split_hashes["model_train"] = hex(split_hash(store, flatten(splits.model_train)));
  report.split_hashes["classifier_train"] = hex(split_hash(store, splits.classifier_train));
  report.split_hashes["eval_test"] = hex(split_hash(store, splits.eval_test));

  const Latents train = extract_latents(encoder, splits, splits.classifier_train);
  const auto content_clf = fit_classifier(train.content, train.labels, options.classifier);
  const auto style_clf = fit_classifier(train.style, train.labels, options.classifier);

  const Matrix test_pixels = splits.materialize(splits.eval_test);
  const Latents test = extract_latents(encoder, test_pixels, splits.labels(splits.eval_test));
  report.content_accuracy = accuracy(content_clf->predict(test.content), test.labels);
  report.style_accuracy = accuracy(style_clf->predict(test.style), test.labels);
  report.recon_nll = reconstruction_error(encoder, decoder, test_pixels);

  for (const auto& variant : splits.eval_variants) {
    const Latents lat = extract_latents(encoder, splits, variant.observations);
    report.variants[variant.name] = {accuracy(content_clf->predict(lat.content), lat.labels),
                                     accuracy(style_clf->predict(lat.style), lat.labels)};
  }

  std::mt19937_64 rng(options.seed);
  const auto n_test = static_cast<Index>(splits.eval_test.size());
  std::vector<Index> order(static_cast<std::size_t>(n_test));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const Index g = std::min<Index>(options.grid_size, n_test / 2);
  Matrix row_images(g, test_pixels.cols()), col_images(g, test_pixels.cols());
  for (Index i = 0; i < g; ++i) {
    row_images.row(i) = test_pixels.row(order[static_cast<std::size_t>(i)]);
    col_images.row(i) = test_pixels.row(order[static_cast<std::size_t>(g + i)]);
  }
  const ImageGrid grid = swap_grid(encoder, decoder, row_images, col_images);
  report.swap_column_purity = column_purity(grid, encoder, *content_clf);

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const auto swap_path = options.out_dir / "swap_grid.png";
    write_png(swap_path, grid.render());
    report.artifact_paths["swap_grid"] = swap_path.filename().string();

    Index a = order[0], b = order[1];
    for (std::size_t k = 1; k < order.size(); ++k) {
      if (test.labels[static_cast<std::size_t>(order[k])] != test.labels[static_cast<std::size_t>(a)]) {
        b = order[k];
        break;
      }
    }
    const Matrix ra = test_pixels.row(a), rb = test_pixels.row(b);
    const ImageGrid trav = latent_traversal(encoder, decoder, {ra.data(), static_cast<std::size_t>(ra.size())},
                                            {rb.data(), static_cast<std::size_t>(rb.size())},
                                            options.traversal_steps);
    const auto trav_path = options.out_dir / "traversal.png";
    write_png(trav_path, trav.render());
    report.artifact_paths["traversal"] = trav_path.filename().string();

    if (encoder.config().content_dim == 2) {
      std::vector<double> xs(test.content.col(0).data(), test.content.col(0).data() + test.size());
      std::vector<double> ys(test.content.col(1).data(), test.content.col(1).data() + test.size());
      const auto scatter_path = options.out_dir / "content_scatter.png";
      write_png(scatter_path, scatter_plot(xs, ys, test.labels));
      report.artifact_paths["content_scatter"] = scatter_path.filename().string();
    }
  }
  return report;
}

void append_results_csv(const std::filesystem::path& path, const EvalReport& report) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to '" + path.string() + "'");
  if (fresh) out << "run_id,dataset,classifier,content_accuracy,style_accuracy,recon_nll\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6f,%.6f,%.6f\n", report.run_id.c_str(), report.dataset.c_str(),
                report.classifier.c_str(), report.content_accuracy, report.style_accuracy, report.recon_nll);
  out << buf;
}

}  // namespace mlvae
