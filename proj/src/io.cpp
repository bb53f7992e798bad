#include "aim/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "aim/error.hpp"

namespace aim {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void magic(std::string_view m) {
    std::array<char, 8> buf{};
    std::memcpy(buf.data(), m.data(), std::min<std::size_t>(m.size(), 8));
    out_.write(buf.data(), 8);
  }
  void u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
  void f64(double v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot read " + path.string());
  }
  void magic(std::string_view m) {
    std::array<char, 8> buf{}, want{};
    std::memcpy(want.data(), m.data(), std::min<std::size_t>(m.size(), 8));
    bytes(buf.data(), 8);
    if (buf != want) throw IoError(path_.string() + " is not a " + std::string(m) + " file");
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError(path_.string() + " is truncated");
  }
  void digest(std::uint64_t expected) {
    const auto d = u64();
    if (d != expected) throw IoError(path_.string() + " was written for a different model configuration");
  }
  void finish() {
    if (in_.peek() != std::char_traits<char>::eof()) throw IoError(path_.string() + " has trailing bytes");
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void write_vector(const std::filesystem::path& path, std::string_view magic, std::uint64_t digest,
                  std::span<const double> values) {
  Writer w(path);
  w.magic(magic);
  w.u64(digest);
  w.u64(values.size());
  w.bytes(values.data(), values.size() * sizeof(double));
  w.close();
}

std::vector<double> read_vector(const std::filesystem::path& path, std::string_view magic,
                                std::uint64_t expected_digest) {
  Reader r(path);
  r.magic(magic);
  r.digest(expected_digest);
  const auto n = r.u64();
  if (n > (std::uint64_t{1} << 32)) throw IoError(path.string() + " declares an implausible size");
  std::vector<double> out(n);
  r.bytes(out.data(), n * sizeof(double));
  r.finish();
  return out;
}

void write_mask(const std::filesystem::path& path, std::uint64_t digest, const MaskSet& masks) {
  Writer w(path);
  w.magic(kMaskMagic);
  w.u64(digest);
  for (std::size_t t = 0; t < 3; ++t) {
    w.u64(masks.size[t]);
    w.u64(masks.frozen[t]);
    w.f64(masks.threshold[t]);
  }
  w.u64(masks.mask.size());
  w.bytes(masks.mask.data(), masks.mask.size());
  w.close();
}

MaskSet read_mask(const std::filesystem::path& path, std::uint64_t expected_digest) {
  Reader r(path);
  r.magic(kMaskMagic);
  r.digest(expected_digest);
  MaskSet m;
  for (std::size_t t = 0; t < 3; ++t) {
    m.size[t] = r.u64();
    m.frozen[t] = r.u64();
    m.threshold[t] = r.f64();
  }
  const auto n = r.u64();
  if (n > (std::uint64_t{1} << 32)) throw IoError(path.string() + " declares an implausible size");
  m.mask.resize(n);
  r.bytes(m.mask.data(), n);
  r.finish();
  std::size_t zeros = 0;
  for (auto v : m.mask) {
    if (v > 1) throw IoError(path.string() + " holds a non-binary mask entry");
    zeros += v == 0;
  }
  if (zeros != m.frozen[0] + m.frozen[1] + m.frozen[2]) throw IoError(path.string() + " frozen counts disagree");
  return m;
}

}  // namespace aim
