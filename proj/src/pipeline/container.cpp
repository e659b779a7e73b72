#include "odn/pipeline/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "odn/core/error.hpp"

namespace odn::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'D', 'N', '1'};

template <class T>
void append(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <class T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("container truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& extents) {
  std::uint64_t n = 1;
  for (auto e : extents) n *= e;
  return n;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    c = ::crc32(c, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void TensorContainer::put(const std::string& name, Entry e) {
  if (name.empty()) throw FormatError("entry names must be non-empty");
  if (e.payload.size() != element_count(e.extents) * dtype_size(e.dtype)) {
    throw FormatError("payload size of '" + name + "' does not match its extents");
  }
  if (!entries_.emplace(name, std::move(e)).second) throw FormatError("duplicate entry '" + name + "'");
}

void TensorContainer::put_f64(const std::string& name, const Tensor& t) {
  std::vector<std::uint64_t> ext(t.shape().begin(), t.shape().end());
  put_f64(name, t.values(), std::move(ext));
}

void TensorContainer::put_f64(const std::string& name, std::span<const double> values,
                              std::vector<std::uint64_t> extents) {
  Entry e{DType::f64, std::move(extents), {}};
  e.payload.resize(values.size() * 8);
  if (!values.empty()) std::memcpy(e.payload.data(), values.data(), e.payload.size());
  put(name, std::move(e));
}

void TensorContainer::put_f32(const std::string& name, std::span<const float> values,
                              std::vector<std::uint64_t> extents) {
  Entry e{DType::f32, std::move(extents), {}};
  e.payload.resize(values.size() * 4);
  if (!values.empty()) std::memcpy(e.payload.data(), values.data(), e.payload.size());
  put(name, std::move(e));
}

void TensorContainer::put_u8(const std::string& name, std::span<const std::uint8_t> values,
                             std::vector<std::uint64_t> extents) {
  put(name, Entry{DType::u8, std::move(extents), std::vector<std::uint8_t>(values.begin(), values.end())});
}

void TensorContainer::put_text(const std::string& name, const std::string& text) {
  std::vector<std::uint8_t> b(text.begin(), text.end());
  const auto n = b.size();
  put(name, Entry{DType::u8, {n}, std::move(b)});
}

const Entry& TensorContainer::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("container has no entry '" + name + "'");
  return it->second;
}

std::vector<double> TensorContainer::get_f64_values(const std::string& name) const {
  const Entry& e = at(name);
  if (e.dtype != DType::f64) throw FormatError("entry '" + name + "' is not binary64");
  std::vector<double> v(e.payload.size() / 8);
  if (!v.empty()) std::memcpy(v.data(), e.payload.data(), e.payload.size());
  return v;
}

Tensor TensorContainer::get_f64(const std::string& name) const {
  const Entry& e = at(name);
  Shape shape(e.extents.begin(), e.extents.end());
  return Tensor(std::move(shape), get_f64_values(name));
}

std::vector<float> TensorContainer::get_f32(const std::string& name) const {
  const Entry& e = at(name);
  if (e.dtype != DType::f32) throw FormatError("entry '" + name + "' is not binary32");
  std::vector<float> v(e.payload.size() / 4);
  if (!v.empty()) std::memcpy(v.data(), e.payload.data(), e.payload.size());
  return v;
}

std::vector<std::uint8_t> TensorContainer::get_u8(const std::string& name) const {
  const Entry& e = at(name);
  if (e.dtype != DType::u8) throw FormatError("entry '" + name + "' is not u8");
  return e.payload;
}

std::string TensorContainer::get_text(const std::string& name) const {
  const auto b = get_u8(name);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  append<std::uint32_t>(out, kVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    append<std::uint32_t>(out, static_cast<std::uint32_t>(e.extents.size()));
    for (auto x : e.extents) append<std::uint64_t>(out, x);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  append<std::uint32_t>(out, crc32(out));
  return out;
}

TensorContainer TensorContainer::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("container truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic: not an ODN1 container");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  Reader r(body);
  r.take_bytes(4);
  const auto version = r.take<std::uint32_t>();
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  if (crc32(body) != stored) throw FormatError("container checksum mismatch");
  const auto count = r.take<std::uint32_t>();
  TensorContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.take<std::uint32_t>();
    const auto nb = r.take_bytes(len);
    std::string name(nb.begin(), nb.end());
    Entry e;
    e.dtype = static_cast<DType>(r.take<std::uint8_t>());
    const std::size_t size = dtype_size(e.dtype);
    const auto rank = r.take<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.extents.push_back(r.take<std::uint64_t>());
    const auto payload = r.take_bytes(element_count(e.extents) * size);
    e.payload.assign(payload.begin(), payload.end());
    c.put(name, std::move(e));
  }
  if (r.position() != body.size()) throw FormatError("trailing bytes after the last entry");
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const { write_atomic(path, serialize()); }

TensorContainer TensorContainer::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace odn::io
