#pragma once

#include <Eigen/Core>

namespace eendvc {

// Row-major so that a row is one frame; every sequence tensor in the
// project is laid out time x channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

// A T' x C matrix on a regular time grid. Frame t covers
// [start_time + t / frame_rate, start_time + (t + 1) / frame_rate).
struct FrameMatrix {
  Matrix data;
  double frame_rate = 50.0;
  double start_time = 0.0;

  Index num_frames() const { return data.rows(); }
  Index dim() const { return data.cols(); }
  double frame_start(Index t) const { return start_time + static_cast<double>(t) / frame_rate; }
  double frame_mid(Index t) const { return start_time + (static_cast<double>(t) + 0.5) / frame_rate; }
  double duration() const { return static_cast<double>(data.rows()) / frame_rate; }
};

}  // namespace eendvc
