#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace msica {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class TargetKind { continuous, categorical };

std::string to_string(TargetKind kind);
TargetKind target_kind_from_string(const std::string& name);

struct TargetSchema {
  std::string name;
  TargetKind kind = TargetKind::continuous;
  int n_classes = 0;  // categorical only

  bool operator==(const TargetSchema&) const = default;
};

// One multichannel recording (channels x samples) and its per-target labels.
// Categorical labels hold the class index as an integer-valued double.
struct Trial {
  MatrixXd signal;
  VectorXd labels;

  bool operator==(const Trial& other) const;
};

struct Dims {
  Index n_trials = 0;
  Index channels = 0;
  Index samples = 0;
  Index n_targets = 0;

  bool operator==(const Dims&) const = default;
};

// Immutable collection of equally shaped trials. The constructor enforces all
// invariants: shared (C, T, M), finite entries, M <= C, unique target names,
// categorical labels in range.
class Dataset {
 public:
  Dataset(std::vector<Trial> trials, std::vector<TargetSchema> schema);

  const std::vector<Trial>& trials() const { return trials_; }
  const Trial& trial(Index i) const { return trials_[static_cast<std::size_t>(i)]; }
  const std::vector<TargetSchema>& schema() const { return schema_; }
  const Dims& dims() const { return dims_; }

  Index n_trials() const { return dims_.n_trials; }
  Index channels() const { return dims_.channels; }
  Index samples() const { return dims_.samples; }
  Index n_targets() const { return dims_.n_targets; }

  // Dataset restricted to the given trial indices (in the given order).
  Dataset subset(const std::vector<Index>& indices) const;

  bool operator==(const Dataset& other) const;

 private:
  std::vector<Trial> trials_;
  std::vector<TargetSchema> schema_;
  Dims dims_;
};

// Invertible C x C unmixing matrix with its cached log|det W|.
// L(W) = -log|det W| is read through neg_log_abs_det().
class UnmixingState {
 public:
  explicit UnmixingState(MatrixXd w);

  const MatrixXd& matrix() const { return w_; }
  Index dim() const { return w_.rows(); }
  double log_abs_det() const { return log_abs_det_; }
  double neg_log_abs_det() const { return -log_abs_det_; }

  // Replaces row c; the caller supplies log|det| of the implied left factor
  // (log|r_cc| for the reparametrized row update) so the cache is updated
  // without a fresh decomposition.
  UnmixingState with_row(Index c, const RowVectorXd& row, double log_abs_factor) const;

 private:
  UnmixingState(MatrixXd w, double log_abs_det);

  MatrixXd w_;
  double log_abs_det_ = 0.0;
};

// log|det M| via partial-pivot LU; throws NumericalError when M is singular.
double log_abs_det(const MatrixXd& m);

// Nonnegative variational weights U, stored per trial as C x T matrices.
struct AuxTensor {
  std::vector<MatrixXd> weights;

  Index n_trials() const { return static_cast<Index>(weights.size()); }
  const MatrixXd& trial(Index i) const { return weights[static_cast<std::size_t>(i)]; }
  MatrixXd& trial(Index i) { return weights[static_cast<std::size_t>(i)]; }
  double squared_distance(const AuxTensor& other) const;
};

struct MixingGroundTruth {
  MatrixXd mixing;
};

// Dataset directory: manifest.json + signals.bin + labels.bin (f64le).
// `generator` entries are written verbatim under the manifest's "generator" key.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const std::map<std::string, std::string>& generator = {});
Dataset load_dataset(const std::filesystem::path& dir);
std::map<std::string, std::string> load_generator_info(const std::filesystem::path& dir);

// C x (N*T) matrix; trial i occupies columns [iT, (i+1)T).
MatrixXd concat_trials(const Dataset& dataset);

// Square matrices on disk: raw row-major f64le `<stem>.bin` plus a text
// sidecar `<stem>.txt` (dims, optional comment lines, one row per line).
void write_matrix(const std::filesystem::path& stem, const MatrixXd& m,
                  const std::vector<std::string>& comments = {});
// Accepts either the .bin (square, dimension inferred) or the .txt sidecar.
MatrixXd read_matrix(const std::filesystem::path& path);

// Raw little-endian f64 helpers shared by the binary formats.
void write_f64le(std::ostream& out, const double* data, std::size_t count);
std::vector<double> read_f64le_file(const std::filesystem::path& path);

}  // namespace msica
