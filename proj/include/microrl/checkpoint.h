#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "microrl/policy_net.h"

namespace microrl {

// Binary layout, all integers little-endian uint32:
//   "MRL1" | version | scenario name (len, bytes) | feature width | #entries
//   then per entry: name (len, bytes) | ndim | dims... | float32 LE data
constexpr char kCheckpointMagic[4] = {'M', 'R', 'L', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string scenario;
  std::uint32_t featureWidth = 0;
  std::vector<NamedArray> entries;

  const NamedArray* find(const std::string& name) const;
  void put(NamedArray entry); // replaces an entry of the same name

  // Stores every array of `params` as "<prefix><array name>".
  void putParameters(const ParameterSet<float>& params,
                     const std::string& prefix = "");
  // Loads into `params`, which must already have the right shape.
  void getParameters(ParameterSet<float>& params,
                     const std::string& prefix = "") const;
  bool hasParameters(const std::string& prefix = "") const;
  NetShape netShape() const; // from the unprefixed parameter entries
};

std::string encodeCheckpoint(const Checkpoint& ckpt);
Checkpoint decodeCheckpoint(const std::string& bytes);

void writeCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint readCheckpoint(const std::string& path);

} // namespace microrl
