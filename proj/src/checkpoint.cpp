#include "ovgsr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "ovgsr/errors.hpp"

namespace ovgsr {
namespace {

constexpr char kMagic[8] = {'O', 'V', 'G', 'S', 'R', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr int kMaxRank = 8;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

const Tensor<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint snapshot_params(ModelParams<double>& params,
                           std::uint64_t fingerprint) {
  Checkpoint ck;
  ck.fingerprint = fingerprint;
  for (Parameter<double>* p : params.collect()) {
    Tensor<double> copy(p->value.shape());
    std::memcpy(copy.data(), p->value.data(),
                static_cast<std::size_t>(p->value.numel()) * sizeof(double));
    ck.tensors.emplace_back(p->name, std::move(copy));
  }
  return ck;
}

void restore_params(ModelParams<double>& params, const Checkpoint& ck) {
  std::map<std::string, Parameter<double>*> by_name;
  for (Parameter<double>* p : params.collect()) by_name[p->name] = p;
  if (by_name.size() != ck.tensors.size())
    throw CheckpointError("checkpoint holds " +
                          std::to_string(ck.tensors.size()) + " tensors, model has " +
                          std::to_string(by_name.size()) + " parameters");
  for (const auto& [name, tensor] : ck.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("checkpoint tensor '" + name +
                            "' has no matching parameter");
    Parameter<double>* p = it->second;
    if (tensor.shape() != p->value.shape())
      throw CheckpointError("checkpoint tensor '" + name + "' shaped " +
                            tensor.shape_str() + ", parameter expects " +
                            p->value.shape_str());
    std::memcpy(p->value.data(), tensor.data(),
                static_cast<std::size_t>(tensor.numel()) * sizeof(double));
  }
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, ck.fingerprint);
  write_pod(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, tensor] : ck.tensors) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, kDtypeF64);
    write_pod(out, static_cast<std::uint8_t>(tensor.shape().size()));
    for (std::int64_t d : tensor.shape()) write_pod(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!out) throw CheckpointError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + ": " + path);
  Checkpoint ck;
  ck.fingerprint = read_pod<std::uint64_t>(in, path);
  const auto count = read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    if (name_len > 4096)
      throw CheckpointError("implausible tensor name length in " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
    const auto dtype = read_pod<std::uint8_t>(in, path);
    if (dtype != kDtypeF64)
      throw CheckpointError("unsupported tensor dtype in " + path);
    const auto ndim = read_pod<std::uint8_t>(in, path);
    if (ndim == 0 || ndim > kMaxRank)
      throw CheckpointError("implausible tensor rank in " + path);
    std::vector<std::int64_t> shape(ndim);
    std::int64_t numel = 1;
    for (auto& d : shape) {
      d = read_pod<std::int64_t>(in, path);
      if (d <= 0 || numel > (1ll << 40) / d)
        throw CheckpointError("implausible tensor shape in " + path);
      numel *= d;
    }
    Tensor<double> tensor(shape);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
    ck.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ck;
}

}  // namespace ovgsr
