#include "blindsnf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "blindsnf/io.hpp"

namespace blindsnf {

namespace {

enum class RecordKind : std::uint8_t { tensor = 0, text = 1 };

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw ParseError("checkpoint is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>& CheckpointArchive::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw ParseError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& CheckpointArchive::text(const std::string& name) const {
  const auto it = texts.find(name);
  if (it == texts.end()) throw ParseError("checkpoint has no record '" + name + "'");
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointArchive& archive) {
  write_atomic(path, [&](const std::filesystem::path& tmp) {
    std::ofstream os(tmp, std::ios::binary);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, archive.tensors.size() + archive.texts.size());
    for (const auto& [name, t] : archive.tensors) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put(os, RecordKind::tensor);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (Index d : t.shape()) put<std::int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    for (const auto& [name, text] : archive.texts) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put(os, RecordKind::text);
      put<std::uint64_t>(os, text.size());
      os.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
  });
}

CheckpointArchive read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint " + path.string());
  Reader in(std::vector<char>(std::istreambuf_iterator<char>(is), {}));

  if (std::memcmp(in.take(sizeof(kCheckpointMagic)), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic bytes)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is incompatible with version " +
                       std::to_string(kCheckpointVersion));
  }
  CheckpointArchive archive;
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name(in.take(name_len), name_len);
    const auto kind = in.get<RecordKind>();
    if (kind == RecordKind::tensor) {
      const auto rank = in.get<std::uint32_t>();
      if (rank > 8) throw ParseError("checkpoint tensor '" + name + "' has implausible rank");
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) {
        const auto d = in.get<std::int64_t>();
        if (d <= 0) throw ParseError("checkpoint tensor '" + name + "' has a non-positive dimension");
        shape.push_back(d);
      }
      const std::size_t bytes = static_cast<std::size_t>(shape_size(shape)) * sizeof(float);
      Tensor<float> t(shape);
      std::memcpy(t.data(), in.take(bytes), bytes);
      archive.tensors.emplace(std::move(name), std::move(t));
    } else if (kind == RecordKind::text) {
      const auto len = in.get<std::uint64_t>();
      archive.texts.emplace(std::move(name), std::string(in.take(len), len));
    } else {
      throw ParseError("checkpoint record '" + name + "' has unknown kind");
    }
  }
  if (!in.done()) throw ParseError("checkpoint has trailing bytes");
  return archive;
}

}  // namespace blindsnf
