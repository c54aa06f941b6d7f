// SPDX-License-Identifier: Apache-2.0
#include "macaw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "macaw/error.hpp"

namespace macaw {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host order");

namespace {

constexpr char kMagic[4] = {'M', 'C', 'W', 'C'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_blob(std::string_view s) {
    put<std::uint64_t>(s.size());
    out_.append(s);
  }
  void put_tensor(const std::string& name, const Tensor& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    out_.append(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(d);
    for (double v : t.data()) put<double>(v);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view get_blob() { return get_bytes(checked_size(get<std::uint64_t>())); }
  std::pair<std::string, Tensor> get_tensor() {
    std::string name(get_bytes(get<std::uint32_t>()));
    const auto rank = get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw Error(Errc::CorruptPayload, "tensor " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = checked_size(get<std::uint64_t>());
      if (d == 0) throw Error(Errc::CorruptPayload, "tensor " + name + " has a zero extent");
      n *= d;
      checked_size(n * sizeof(double));
    }
    std::vector<double> data(n);
    need(n * sizeof(double));
    std::memcpy(data.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw Error(Errc::CorruptPayload, "checkpoint ends early");
  }
  std::size_t checked_size(std::uint64_t n) const {
    if (n > bytes_.size()) throw Error(Errc::CorruptPayload, "length field exceeds file size");
    return static_cast<std::size_t>(n);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string config_json(const RunConfig& cfg) {
  RunConfig stored = cfg;
  stored.data = DataConfig{};
  auto j = nlohmann::ordered_json::parse(to_json(stored));
  j.erase("data");
  return j.dump();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_blob(config_json(ckpt.config));
  w.put_blob(ckpt.vocab.to_json());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.put_tensor(ckpt.params.name(i), ckpt.params[i]);
  if (ckpt.optimizer.m.size() != ckpt.params.size() || ckpt.optimizer.v.size() != ckpt.params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer state does not match parameters");
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(2 * ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.put_tensor("adam.m/" + ckpt.params.name(i), ckpt.optimizer.m[i]);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.put_tensor("adam.v/" + ckpt.params.name(i), ckpt.optimizer.v[i]);
  w.put<std::uint64_t>(ckpt.step);
  w.put_blob(ckpt.rng_state);
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::BadMagic, "not a checkpoint");
  }
  Reader r(bytes.substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                           std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  try {
    ckpt.config = parse_run_config(r.get_blob());
  } catch (const Error& e) {
    if (e.code() == Errc::CorruptPayload) throw;
    throw Error(Errc::CorruptPayload, std::string("embedded config: ") + e.what());
  }
  ckpt.vocab = Vocab::from_json(r.get_blob());

  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, t] = r.get_tensor();
    if (ckpt.params.contains(name)) throw Error(Errc::CorruptPayload, "duplicate tensor " + name);
    ckpt.params.add(std::move(name), std::move(t));
  }
  const auto n_opt = r.get<std::uint32_t>();
  if (n_opt != 2 * n_params) throw Error(Errc::CorruptPayload, "optimizer tensor count mismatch");
  ckpt.optimizer.m.resize(n_params);
  ckpt.optimizer.v.resize(n_params);
  for (std::uint32_t i = 0; i < n_opt; ++i) {
    auto [name, t] = r.get_tensor();
    const bool first = i < n_params;
    const std::size_t p = first ? i : i - n_params;
    const std::string expected = (first ? "adam.m/" : "adam.v/") + ckpt.params.name(p);
    if (name != expected || t.shape() != ckpt.params[p].shape()) {
      throw Error(Errc::CorruptPayload, "optimizer tensor " + name + " does not match " + expected);
    }
    (first ? ckpt.optimizer.m : ckpt.optimizer.v)[p] = std::move(t);
  }
  ckpt.step = r.get<std::uint64_t>();
  ckpt.optimizer.step = ckpt.step;
  ckpt.rng_state = std::string(r.get_blob());
  if (!r.done()) throw Error(Errc::CorruptPayload, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoError, path + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::IoError, path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, path + ": cannot open checkpoint");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace macaw
