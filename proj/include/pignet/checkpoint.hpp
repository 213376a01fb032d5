#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pignet/config.hpp"
#include "pignet/errors.hpp"
#include "pignet/model.hpp"
#include "pignet/optim.hpp"
#include "pignet/rng.hpp"

namespace pignet {

// Binary layout, all integers little-endian:
//
//   "PIGNET01"
//   u64 metadata length, then metadata:
//       u64 config hash, u64 epoch, u64 optimizer step,
//       u64 FNV-1a of the tensor section, u32 length + RNG state text
//   tensor section:
//       u64 tensor count, then per tensor:
//       u32 name length, name, u32 rank, u64 extents[rank], f64 values[]
//
// Tensors appear as param/<name>, buffer/<name>, adam.m/<name>,
// adam.v/<name>, in model declaration order.

inline constexpr std::string_view kCheckpointMagic = "PIGNET01";

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::uint64_t optimizer_step = 0;
  std::string rng_state;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::string& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string str() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw format_error("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

template <typename T>
std::vector<StoredTensor> gather_tensors(const SegmentationNet<T>& model,
                                         const AdamState<T>& optimizer) {
  auto set = model.parameters();
  std::vector<StoredTensor> out;
  auto push = [&](std::string name, const Shape& shape, std::span<const T> v) {
    out.push_back({std::move(name), shape, std::vector<double>(v.begin(), v.end())});
  };
  for (const auto& p : set.params) push("param/" + p.name, p.tensor.shape(), p.tensor.data());
  for (const auto& b : set.buffers) push("buffer/" + b.name, b.tensor.shape(), b.tensor.data());
  if (optimizer.m.size() == set.params.size()) {
    for (std::size_t i = 0; i < set.params.size(); ++i)
      push("adam.m/" + set.params[i].name, set.params[i].tensor.shape(), optimizer.m[i]);
    for (std::size_t i = 0; i < set.params.size(); ++i)
      push("adam.v/" + set.params[i].name, set.params[i].tensor.shape(), optimizer.v[i]);
  }
  return out;
}

}  // namespace detail

inline std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw format_error("checkpoint RNG state is unreadable");
}

/// Writes atomically: the file appears under `path` only once complete.
template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const SegmentationNet<T>& model,
                     const AdamState<T>& optimizer, std::uint64_t epoch,
                     const Rng& rng) {
  detail::ByteWriter tensors;
  const auto stored = detail::gather_tensors(model, optimizer);
  tensors.u64(stored.size());
  for (const auto& t : stored) {
    tensors.str(t.name);
    tensors.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) tensors.u64(e);
    for (double v : t.values) tensors.f64(v);
  }

  detail::ByteWriter meta;
  meta.u64(config_hash(model.config()));
  meta.u64(epoch);
  meta.u64(optimizer.step);
  meta.u64(fnv1a(tensors.buffer()));
  meta.str(rng_state(rng));

  detail::ByteWriter file;
  file.bytes(kCheckpointMagic);
  file.u64(meta.buffer().size());
  file.bytes(meta.buffer());
  file.bytes(tensors.buffer());

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot write checkpoint " + tmp.string());
    out.write(file.buffer().data(), static_cast<std::streamsize>(file.buffer().size()));
    if (!out) throw format_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Restores parameters, BN statistics and (optionally) optimizer and RNG
/// state. The file is fully parsed and checked against the model before any
/// value is written, so a rejected checkpoint leaves the model untouched.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path,
                               SegmentationNet<T>& model,
                               AdamState<T>* optimizer = nullptr,
                               Rng* rng = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  detail::ByteReader reader(blob);
  if (blob.size() < kCheckpointMagic.size() ||
      reader.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw format_error(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto meta_len = reader.u64();
  if (meta_len > reader.remaining()) {
    throw format_error("checkpoint truncated inside metadata");
  }
  detail::ByteReader meta(reader.bytes(meta_len));
  CheckpointInfo info;
  info.config_hash = meta.u64();
  info.epoch = meta.u64();
  info.optimizer_step = meta.u64();
  const std::uint64_t checksum = meta.u64();
  info.rng_state = meta.str();

  const auto section = reader.bytes(reader.remaining());
  if (fnv1a(section) != checksum) {
    throw format_error("checkpoint tensor section is corrupt (checksum mismatch)");
  }
  if (info.config_hash != config_hash(model.config())) {
    throw compatibility_error(
        "checkpoint was written for a different architecture (config hash " +
        std::to_string(info.config_hash) + ", model has " +
        std::to_string(config_hash(model.config())) + ")");
  }

  detail::ByteReader tr(section);
  std::vector<detail::StoredTensor> stored(tr.u64());
  for (auto& t : stored) {
    t.name = tr.str();
    t.shape.resize(tr.u32());
    for (auto& e : t.shape) e = tr.u64();
    t.values.resize(shape_size(t.shape));
    for (auto& v : t.values) v = tr.f64();
  }
  if (!tr.done()) throw format_error("trailing bytes after checkpoint tensors");

  auto set = model.parameters();
  const std::size_t np = set.params.size(), nb = set.buffers.size();
  const bool has_moments = stored.size() == np * 3 + nb;
  if (stored.size() != np + nb && !has_moments) {
    throw compatibility_error("checkpoint holds " + std::to_string(stored.size()) +
                              " tensors, model expects " + std::to_string(np + nb));
  }
  auto expect = [&](std::size_t i, const std::string& name, const Shape& shape) {
    if (stored[i].name != name || stored[i].shape != shape) {
      throw compatibility_error("checkpoint tensor " + std::to_string(i) + " is " +
                                stored[i].name + shape_str(stored[i].shape) +
                                ", expected " + name + shape_str(shape));
    }
  };
  for (std::size_t i = 0; i < np; ++i)
    expect(i, "param/" + set.params[i].name, set.params[i].tensor.shape());
  for (std::size_t i = 0; i < nb; ++i)
    expect(np + i, "buffer/" + set.buffers[i].name, set.buffers[i].tensor.shape());
  if (has_moments) {
    for (std::size_t i = 0; i < np; ++i) {
      expect(np + nb + i, "adam.m/" + set.params[i].name, set.params[i].tensor.shape());
      expect(2 * np + nb + i, "adam.v/" + set.params[i].name, set.params[i].tensor.shape());
    }
  }
  Rng restored_rng;
  if (rng) restore_rng(restored_rng, info.rng_state);

  // Everything validated; apply.
  auto assign = [](Tensor<T> t, const std::vector<double>& values) {
    auto d = t.mutable_data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = static_cast<T>(values[j]);
  };
  for (std::size_t i = 0; i < np; ++i) assign(set.params[i].tensor, stored[i].values);
  for (std::size_t i = 0; i < nb; ++i) assign(set.buffers[i].tensor, stored[np + i].values);
  if (optimizer) {
    optimizer->reset(set.tensors());
    if (has_moments) {
      for (std::size_t i = 0; i < np; ++i) {
        optimizer->m[i].assign(stored[np + nb + i].values.begin(),
                               stored[np + nb + i].values.end());
        optimizer->v[i].assign(stored[2 * np + nb + i].values.begin(),
                               stored[2 * np + nb + i].values.end());
      }
      optimizer->step = info.optimizer_step;
    }
  }
  if (rng) *rng = restored_rng;
  return info;
}

}  // namespace pignet
