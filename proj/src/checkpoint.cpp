#include "microrl/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace microrl {

namespace {

void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void putString(std::string& out, const std::string& s) {
  putU32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  float f32() {
    std::uint32_t bits = u32();
    return std::bit_cast<float>(bits);
  }

  void expect(const char* raw, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, raw, n) != 0) {
      throw CheckpointError("not a checkpoint file (bad magic)");
    }
    pos_ += n;
  }

  bool atEnd() const {
    return pos_ == bytes_.size();
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

} // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void Checkpoint::put(NamedArray entry) {
  for (auto& e : entries) {
    if (e.name == entry.name) {
      e = std::move(entry);
      return;
    }
  }
  entries.push_back(std::move(entry));
}

void Checkpoint::putParameters(const ParameterSet<float>& params,
                               const std::string& prefix) {
  for (const auto& a : params.arrays()) {
    NamedArray e;
    e.name = prefix + a.name;
    e.shape = a.cols == 1 ? std::vector<std::uint32_t>{std::uint32_t(a.rows)}
                          : std::vector<std::uint32_t>{std::uint32_t(a.rows),
                                                       std::uint32_t(a.cols)};
    e.data.assign(a.data, a.data + static_cast<std::size_t>(a.rows) * a.cols);
    put(std::move(e));
  }
}

void Checkpoint::getParameters(ParameterSet<float>& params,
                               const std::string& prefix) const {
  for (auto& a : params.arrays()) {
    const NamedArray* e = find(prefix + a.name);
    if (e == nullptr) {
      throw CheckpointError("checkpoint lacks entry '" + prefix + a.name + "'");
    }
    if (e->data.size() != static_cast<std::size_t>(a.rows) * a.cols) {
      throw CheckpointError("entry '" + e->name + "' has the wrong size");
    }
    std::memcpy(a.data, e->data.data(), e->data.size() * sizeof(float));
  }
}

bool Checkpoint::hasParameters(const std::string& prefix) const {
  return find(prefix + "w") != nullptr;
}

NetShape Checkpoint::netShape() const {
  const NamedArray* row1 = find("embed.row1.weight");
  const NamedArray* head1 = find("embed.head1.weight");
  if (row1 == nullptr || head1 == nullptr || row1->shape.size() != 2 ||
      head1->shape.size() != 2) {
    throw CheckpointError("checkpoint has no network parameters");
  }
  NetShape s;
  s.hidden = static_cast<int>(row1->shape[0]);
  s.inputWidth = static_cast<int>(row1->shape[1]);
  s.actWidth = static_cast<int>(head1->shape[1]) - 2 * s.hidden;
  return s;
}

std::string encodeCheckpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, 4);
  putU32(out, kCheckpointVersion);
  putString(out, ckpt.scenario);
  putU32(out, ckpt.featureWidth);
  putU32(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    std::size_t expected = 1;
    for (auto d : e.shape) expected *= d;
    if (expected != e.data.size()) {
      throw CheckpointError("entry '" + e.name + "' shape does not match data");
    }
    putString(out, e.name);
    putU32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) putU32(out, d);
    for (float f : e.data) putU32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Checkpoint decodeCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kCheckpointMagic, 4);
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.scenario = r.str();
  ckpt.featureWidth = r.u32();
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray e;
    e.name = r.str();
    std::uint32_t ndim = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(r.u32());
      n *= e.shape.back();
    }
    if (n > bytes.size() / 4) throw CheckpointError("truncated checkpoint");
    e.data.resize(n);
    for (auto& f : e.data) f = r.f32();
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.atEnd()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

void writeCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string bytes = encodeCheckpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path + "'");
}

Checkpoint readCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return decodeCheckpoint(buf.str());
}

} // namespace microrl
