#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sprk {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownTableau : Error {
  explicit UnknownTableau(const std::string& name)
      : Error("unknown tableau: " + name) {}
};

// a transform or pairing needed b_i != 0 and found a zero weight
struct ZeroWeight : Error {
  int stage;
  explicit ZeroWeight(int stage_index)
      : Error("weight b_" + std::to_string(stage_index + 1) + " is zero"),
        stage(stage_index) {}
};

struct StageSolveFailed : Error {
  double residual;
  StageSolveFailed(const std::string& what, double res)
      : Error(what + " (residual " + std::to_string(res) + ")"), residual(res) {}
};

struct NonFiniteValue : Error {
  using Error::Error;
};

struct GridMismatch : Error {
  using Error::Error;
};

struct MissingJacobian : Error {
  using Error::Error;
};

struct BlockSolveFailed : Error {
  std::string block;
  BlockSolveFailed(const std::string& block_label, const std::string& what)
      : Error("constraint block " + block_label + ": " + what),
        block(block_label) {}
};

struct SingularBlock : Error {
  std::string block;
  explicit SingularBlock(const std::string& block_label)
      : Error("singular multiplier solve in block " + block_label),
        block(block_label) {}
};

struct SingularMSystem : Error {
  using Error::Error;
};

struct SingularHuu : Error {
  int step, stage;
  SingularHuu(int step_index, int stage_index)
      : Error("singular control Hessian at step " + std::to_string(step_index) +
              ", stage " + std::to_string(stage_index)),
        step(step_index), stage(stage_index) {}
};

struct NewtonDiverged : Error {
  double residual;
  NewtonDiverged(const std::string& what, double res)
      : Error(what + " (residual " + std::to_string(res) + ")"), residual(res) {}
};

struct UnsupportedMode : Error {
  using Error::Error;
};

// a reproduction run found cells that do not match their pinned values
struct MismatchReport : Error {
  std::vector<std::string> cells;
  explicit MismatchReport(std::vector<std::string> bad)
      : Error("reference values not reproduced (" + std::to_string(bad.size()) +
              " cells)"),
        cells(std::move(bad)) {}
};

}  // namespace sprk
