#include "msica/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <Eigen/LU>
#include <json.hpp>

#include "msica/errors.hpp"

namespace msica {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kSignals = "signals.bin";
constexpr const char* kLabels = "labels.bin";
constexpr const char* kLayout = "trial-major row-major C×T";

std::uint64_t to_little(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    std::uint64_t out = 0;
    for (int b = 0; b < 8; ++b) out |= ((bits >> (8 * b)) & 0xFFu) << (8 * (7 - b));
    return out;
  }
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace

std::string to_string(TargetKind kind) {
  return kind == TargetKind::continuous ? "continuous" : "categorical";
}

TargetKind target_kind_from_string(const std::string& name) {
  if (name == "continuous") return TargetKind::continuous;
  if (name == "categorical") return TargetKind::categorical;
  throw DatasetError("unknown target kind '" + name + "'");
}

bool Trial::operator==(const Trial& other) const {
  return signal.rows() == other.signal.rows() && signal.cols() == other.signal.cols() &&
         labels.size() == other.labels.size() && signal == other.signal &&
         labels == other.labels;
}

Dataset::Dataset(std::vector<Trial> trials, std::vector<TargetSchema> schema)
    : trials_(std::move(trials)), schema_(std::move(schema)) {
  if (trials_.empty()) throw DatasetError("dataset has no trials");
  dims_.n_trials = static_cast<Index>(trials_.size());
  dims_.channels = trials_.front().signal.rows();
  dims_.samples = trials_.front().signal.cols();
  dims_.n_targets = static_cast<Index>(schema_.size());
  if (dims_.channels < 1 || dims_.samples < 1) throw DatasetError("trials must be non-empty");
  if (dims_.n_targets > dims_.channels)
    throw DatasetError("number of targets M must not exceed channels C");

  std::set<std::string> names;
  for (const auto& target : schema_) {
    if (target.name.empty()) throw DatasetError("target names must be non-empty");
    if (!names.insert(target.name).second)
      throw DatasetError("duplicate target name '" + target.name + "'");
    if (target.kind == TargetKind::categorical && target.n_classes < 2)
      throw DatasetError("categorical target '" + target.name + "' needs n_classes >= 2");
  }

  for (std::size_t i = 0; i < trials_.size(); ++i) {
    const Trial& trial = trials_[i];
    if (trial.signal.rows() != dims_.channels || trial.signal.cols() != dims_.samples)
      throw DatasetError("trial " + std::to_string(i) + " has a different shape");
    if (trial.labels.size() != dims_.n_targets)
      throw DatasetError("trial " + std::to_string(i) + " has the wrong number of labels");
    if (!all_finite(trial.signal))
      throw DatasetError("trial " + std::to_string(i) + " has non-finite signal entries");
    if (!trial.labels.allFinite())
      throw DatasetError("trial " + std::to_string(i) + " has non-finite labels");
    for (Index m = 0; m < dims_.n_targets; ++m) {
      const auto& target = schema_[static_cast<std::size_t>(m)];
      if (target.kind != TargetKind::categorical) continue;
      const double y = trial.labels(m);
      if (y != std::floor(y) || y < 0.0 || y >= target.n_classes)
        throw DatasetError("trial " + std::to_string(i) + ": class index out of range for '" +
                           target.name + "'");
    }
  }
}

Dataset Dataset::subset(const std::vector<Index>& indices) const {
  std::vector<Trial> picked;
  picked.reserve(indices.size());
  for (Index i : indices) {
    if (i < 0 || i >= n_trials()) throw DatasetError("subset index out of range");
    picked.push_back(trial(i));
  }
  return Dataset(std::move(picked), schema_);
}

bool Dataset::operator==(const Dataset& other) const {
  return dims_ == other.dims_ && schema_ == other.schema_ && trials_ == other.trials_;
}

double log_abs_det(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw NumericalError("log_abs_det: matrix must be square");
  Eigen::PartialPivLU<MatrixXd> lu(m);
  const auto& packed = lu.matrixLU();
  double total = 0.0;
  for (Index j = 0; j < packed.rows(); ++j) {
    const double d = std::abs(packed(j, j));
    if (!(d > 0.0) || !std::isfinite(d)) throw NumericalError("matrix is singular");
    total += std::log(d);
  }
  return total;
}

UnmixingState::UnmixingState(MatrixXd w) : w_(std::move(w)) {
  if (!w_.allFinite()) throw NumericalError("unmixing matrix has non-finite entries");
  log_abs_det_ = msica::log_abs_det(w_);
}

UnmixingState::UnmixingState(MatrixXd w, double log_abs_det)
    : w_(std::move(w)), log_abs_det_(log_abs_det) {}

UnmixingState UnmixingState::with_row(Index c, const RowVectorXd& row,
                                      double log_abs_factor) const {
  if (!std::isfinite(log_abs_factor) || !row.allFinite())
    throw NumericalError("row replacement produced a singular or non-finite matrix");
  MatrixXd next = w_;
  next.row(c) = row;
  return UnmixingState(std::move(next), log_abs_det_ + log_abs_factor);
}

double AuxTensor::squared_distance(const AuxTensor& other) const {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    total += (weights[i] - other.weights[i]).squaredNorm();
  return total;
}

void write_f64le(std::ostream& out, const double* data, std::size_t count) {
  std::vector<char> buffer(count * 8);
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(data[k]));
    std::memcpy(buffer.data() + 8 * k, &bits, 8);
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw Error("write failed");
}

std::vector<double> read_f64le_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0)
    throw DatasetError(path.string() + ": size is not a multiple of 8 bytes");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + 8 * k, 8);
    values[k] = std::bit_cast<double>(to_little(bits));
  }
  return values;
}

void save_dataset(const Dataset& dataset, const fs::path& dir,
                  const std::map<std::string, std::string>& generator) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());

  const Dims& d = dataset.dims();
  json manifest;
  manifest["n_trials"] = d.n_trials;
  manifest["channels"] = d.channels;
  manifest["samples"] = d.samples;
  manifest["payload_dtype"] = "f64le";
  manifest["layout"] = kLayout;
  json targets = json::array();
  for (const auto& t : dataset.schema()) {
    json entry{{"name", t.name}, {"kind", to_string(t.kind)}};
    if (t.kind == TargetKind::categorical) entry["n_classes"] = t.n_classes;
    targets.push_back(entry);
  }
  manifest["targets"] = targets;
  if (!generator.empty()) manifest["generator"] = generator;

  {
    std::ofstream out(dir / kManifest, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / kManifest).string());
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / kSignals, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / kSignals).string());
    std::vector<double> row_major(static_cast<std::size_t>(d.channels * d.samples));
    for (const auto& trial : dataset.trials()) {
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          row_major.data(), d.channels, d.samples) = trial.signal;
      write_f64le(out, row_major.data(), row_major.size());
    }
  }
  {
    std::ofstream out(dir / kLabels, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / kLabels).string());
    for (const auto& trial : dataset.trials())
      write_f64le(out, trial.labels.data(), static_cast<std::size_t>(trial.labels.size()));
  }
}

namespace {

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw DatasetError("missing " + (dir / kManifest).string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("garbled manifest: " + std::string(e.what()));
  }
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  Index n = 0;
  Index c = 0;
  Index t = 0;
  std::vector<TargetSchema> schema;
  try {
    n = manifest.at("n_trials").get<Index>();
    c = manifest.at("channels").get<Index>();
    t = manifest.at("samples").get<Index>();
    if (manifest.at("payload_dtype").get<std::string>() != "f64le")
      throw DatasetError("unsupported payload_dtype");
    for (const auto& entry : manifest.at("targets")) {
      TargetSchema target;
      target.name = entry.at("name").get<std::string>();
      target.kind = target_kind_from_string(entry.at("kind").get<std::string>());
      if (target.kind == TargetKind::categorical) target.n_classes = entry.at("n_classes").get<int>();
      schema.push_back(target);
    }
  } catch (const json::exception& e) {
    throw DatasetError("garbled manifest: " + std::string(e.what()));
  }
  if (n < 1 || c < 1 || t < 1) throw DatasetError("manifest dimensions must be positive");
  const auto m = static_cast<Index>(schema.size());

  const std::vector<double> signals = read_f64le_file(dir / kSignals);
  const std::vector<double> labels = read_f64le_file(dir / kLabels);
  if (static_cast<Index>(signals.size()) != n * c * t)
    throw DatasetError("dimension mismatch: manifest expects " + std::to_string(n * c * t) +
                       " signal values, payload has " + std::to_string(signals.size()));
  if (static_cast<Index>(labels.size()) != n * m)
    throw DatasetError("dimension mismatch: manifest expects " + std::to_string(n * m) +
                       " label values, payload has " + std::to_string(labels.size()));

  std::vector<Trial> trials(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto& trial = trials[static_cast<std::size_t>(i)];
    trial.signal = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(signals.data() + i * c * t, c, t);
    trial.labels = Eigen::Map<const VectorXd>(labels.data() + i * m, m);
  }
  return Dataset(std::move(trials), std::move(schema));
}

std::map<std::string, std::string> load_generator_info(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  std::map<std::string, std::string> info;
  if (manifest.contains("generator")) {
    for (const auto& [key, value] : manifest["generator"].items())
      info[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
  return info;
}

MatrixXd concat_trials(const Dataset& dataset) {
  const Index t = dataset.samples();
  MatrixXd out(dataset.channels(), dataset.n_trials() * t);
  for (Index i = 0; i < dataset.n_trials(); ++i) out.middleCols(i * t, t) = dataset.trial(i).signal;
  return out;
}

void write_matrix(const fs::path& stem, const MatrixXd& m, const std::vector<std::string>& comments) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  fs::path bin = stem;
  bin += ".bin";
  fs::path txt = stem;
  txt += ".txt";
  {
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw Error("cannot write " + bin.string());
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    write_f64le(out, rm.data(), static_cast<std::size_t>(rm.size()));
  }
  std::ofstream out(txt, std::ios::binary);
  if (!out) throw Error("cannot write " + txt.string());
  for (const auto& line : comments) out << "# " << line << '\n';
  out << m.rows() << ' ' << m.cols() << '\n';
  out << std::setprecision(17);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index col = 0; col < m.cols(); ++col) out << (col ? " " : "") << m(r, col);
    out << '\n';
  }
}

MatrixXd read_matrix(const fs::path& path) {
  if (path.extension() == ".txt") {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::string line;
    Index rows = -1;
    Index cols = -1;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream header(line);
      header >> rows >> cols;
      break;
    }
    if (rows < 1 || cols < 1) throw DatasetError(path.string() + ": missing dimension line");
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw DatasetError(path.string() + ": truncated matrix");
    return m;
  }
  const std::vector<double> values = read_f64le_file(path);
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
  if (side < 1 || side * side != static_cast<Index>(values.size()))
    throw DatasetError(path.string() + ": payload is not a square matrix");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), side, side);
}

}  // namespace msica
