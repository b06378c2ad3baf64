#include "stgt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stgt {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(sizeof(kCheckpointMagic));
    if (std::memcmp(in_.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) throw Error("not an STGT checkpoint");
    pos_ += sizeof(kCheckpointMagic);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.uint(kCheckpointVersion);
  w.uint(std::uint32_t{0});  // flags, reserved
  w.uint(ckpt.step);
  w.uint(ckpt.stage);
  w.str(ckpt.config_json);
  const auto& segs = ckpt.values.segments();
  w.uint(static_cast<std::uint32_t>(segs.size()));
  for (const auto& s : segs) {
    w.str(s.name);
    w.uint(static_cast<std::uint32_t>(s.shape.size()));
    for (auto d : s.shape) w.uint(static_cast<std::uint64_t>(d));
    w.uint(static_cast<std::uint64_t>(s.offset));
    w.uint(static_cast<std::uint64_t>(s.length));
  }
  w.uint(static_cast<std::uint64_t>(ckpt.values.size()));
  for (double v : ckpt.values.data()) w.f64(v);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic();
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  r.uint<std::uint32_t>();
  Checkpoint ckpt;
  ckpt.step = r.uint<std::uint64_t>();
  ckpt.stage = r.uint<std::uint32_t>();
  ckpt.config_json = r.str();
  const auto count = r.uint<std::uint32_t>();
  std::vector<ParamVector::Segment> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamVector::Segment s;
    s.name = r.str();
    const auto rank = r.uint<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) s.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
    s.offset = static_cast<std::size_t>(r.uint<std::uint64_t>());
    s.length = static_cast<std::size_t>(r.uint<std::uint64_t>());
    table.push_back(std::move(s));
  }
  for (const auto& s : table) {
    const std::size_t idx = ckpt.values.add_segment(s.name, s.shape);
    const auto& added = ckpt.values.segments()[idx];
    if (added.offset != s.offset || added.length != s.length) {
      throw Error("checkpoint segment '" + s.name + "' is not contiguous with its predecessors");
    }
  }
  const auto total = r.uint<std::uint64_t>();
  if (total != ckpt.values.size()) throw Error("checkpoint value count does not match its segment table");
  for (auto& v : ckpt.values.data()) v = r.f64();
  if (!r.done()) throw Error("trailing bytes after checkpoint payload");
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace stgt
