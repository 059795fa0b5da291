#include "bmode/mat5.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <optional>

#include <zlib.h>

namespace bmode {

namespace {

// Element data types.
enum : std::uint32_t {
  miINT8 = 1,
  miUINT8 = 2,
  miINT16 = 3,
  miUINT16 = 4,
  miINT32 = 5,
  miUINT32 = 6,
  miSINGLE = 7,
  miDOUBLE = 9,
  miINT64 = 12,
  miUINT64 = 13,
  miMATRIX = 14,
  miCOMPRESSED = 15,
  miUTF8 = 16,
};

// Array classes.
enum : std::uint8_t {
  mxCELL = 1,
  mxSTRUCT = 2,
  mxOBJECT = 3,
  mxCHAR = 4,
  mxSPARSE = 5,
  mxDOUBLE = 6,
  mxSINGLE = 7,
  mxINT16 = 10,
};

constexpr std::size_t kHeaderSize = 128;
constexpr std::size_t kMaxInflated = std::size_t{1} << 31;

[[noreturn]] void malformed(const std::string& what) {
  fail(ErrorKind::kInvalidInput, "MAT-v5: " + what);
}

std::size_t type_size(std::uint32_t type) {
  switch (type) {
    case miINT8:
    case miUINT8:
    case miUTF8:
      return 1;
    case miINT16:
    case miUINT16:
      return 2;
    case miINT32:
    case miUINT32:
    case miSINGLE:
      return 4;
    case miDOUBLE:
    case miINT64:
    case miUINT64:
      return 8;
    default:
      return 0;
  }
}

// Bounds-checked cursor over a byte range with a fixed byte order.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  bool at_end() const noexcept { return pos_ >= bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) malformed("truncated element");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n) { take(n); }

  void align8() {
    const std::size_t pad = (8 - pos_ % 8) % 8;
    skip(std::min(pad, remaining()));
  }

  std::uint32_t u32() { return load<std::uint32_t>(take(4).data()); }

  template <typename T>
  T load(const std::uint8_t* p) const {
    std::uint8_t tmp[sizeof(T)];
    std::memcpy(tmp, p, sizeof(T));
    if (swap_) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
    }
    T v;
    std::memcpy(&v, tmp, sizeof(T));
    return v;
  }

  bool swapped() const noexcept { return swap_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  bool swap_;
};

struct Element {
  std::uint32_t type = 0;
  std::span<const std::uint8_t> data;
};

// Reads one tag + payload, handling the small-element format. Leaves the
// reader 8-byte aligned except after miCOMPRESSED, which is not padded.
Element read_element(Reader& in) {
  if (in.remaining() < 8) malformed("truncated element tag");
  const std::uint32_t first = in.u32();
  Element e;
  if ((first >> 16) != 0) {
    // Small data element: 2 bytes size, 2 bytes type, 4 bytes payload.
    e.type = first & 0xffff;
    const std::uint32_t n = first >> 16;
    if (n > 4) malformed("small element larger than 4 bytes");
    const auto payload = in.take(4);
    e.data = payload.first(n);
    return e;
  }
  e.type = first;
  const std::uint32_t n = in.u32();
  e.data = in.take(n);
  if (e.type != miCOMPRESSED) in.align8();
  return e;
}

std::vector<std::uint8_t> inflate_all(std::span<const std::uint8_t> src) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) fail(ErrorKind::kRuntime, "MAT-v5: zlib init failed");
  std::vector<std::uint8_t> out;
  zs.next_in = const_cast<Bytef*>(src.data());
  zs.avail_in = static_cast<uInt>(src.size());
  int status = Z_OK;
  while (status != Z_STREAM_END) {
    const std::size_t old = out.size();
    if (old >= kMaxInflated) {
      inflateEnd(&zs);
      malformed("compressed element inflates beyond size limit");
    }
    out.resize(old + std::max<std::size_t>(4096, src.size() * 2));
    zs.next_out = out.data() + old;
    zs.avail_out = static_cast<uInt>(out.size() - old);
    status = inflate(&zs, Z_NO_FLUSH);
    out.resize(out.size() - zs.avail_out);
    if (status == Z_STREAM_END) break;
    if (status != Z_OK || (zs.avail_in == 0 && zs.avail_out != 0)) {
      inflateEnd(&zs);
      malformed("corrupt or truncated compressed element");
    }
  }
  inflateEnd(&zs);
  return out;
}

double convert_value(const Reader& in, std::uint32_t type, const std::uint8_t* p) {
  switch (type) {
    case miINT8: return static_cast<std::int8_t>(*p);
    case miUINT8: return *p;
    case miINT16: return in.load<std::int16_t>(p);
    case miUINT16: return in.load<std::uint16_t>(p);
    case miINT32: return in.load<std::int32_t>(p);
    case miUINT32: return in.load<std::uint32_t>(p);
    case miSINGLE: return in.load<float>(p);
    case miDOUBLE: return in.load<double>(p);
    case miINT64: return static_cast<double>(in.load<std::int64_t>(p));
    case miUINT64: return static_cast<double>(in.load<std::uint64_t>(p));
    default: malformed("non-numeric data type in numeric array");
  }
}

const char* class_name(std::uint8_t cls) {
  switch (cls) {
    case mxCELL: return "cell";
    case mxSTRUCT: return "struct";
    case mxOBJECT: return "object";
    case mxCHAR: return "char";
    case mxSPARSE: return "sparse";
    default: return "numeric";
  }
}

void parse_matrix(std::span<const std::uint8_t> body, bool swap, Mat5File& file) {
  Reader in(body, swap);
  const Element flags = read_element(in);
  if (flags.type != miUINT32 || flags.data.size() != 8) malformed("bad array flags subelement");
  const std::uint32_t flag_word = in.load<std::uint32_t>(flags.data.data());
  const auto cls = static_cast<std::uint8_t>(flag_word & 0xff);
  const bool complex = (flag_word & 0x0800) != 0;

  const Element dims_el = read_element(in);
  if (dims_el.type != miINT32 || dims_el.data.size() % 4 != 0 || dims_el.data.empty()) {
    malformed("bad dimensions subelement");
  }
  std::vector<std::int64_t> dims;
  for (std::size_t i = 0; i < dims_el.data.size(); i += 4) {
    const auto d = in.load<std::int32_t>(dims_el.data.data() + i);
    if (d < 0) malformed("negative dimension");
    dims.push_back(d);
  }

  const Element name_el = read_element(in);
  if (name_el.type != miINT8) malformed("bad array name subelement");
  const std::string name(name_el.data.begin(), name_el.data.end());

  auto skip = [&](const std::string& reason) {
    file.warnings.push_back("skipped '" + name + "': " + reason);
    file.skipped[name] = reason;
  };

  if (cls != mxDOUBLE && cls != mxSINGLE && cls != mxINT16) {
    skip(std::string("unsupported class ") + class_name(cls) + " (" + std::to_string(cls) + ")");
    return;
  }
  if (complex) {
    skip("complex arrays are not supported");
    return;
  }
  if (dims.size() != 2) {
    skip(std::to_string(dims.size()) + "-D arrays are not supported");
    return;
  }

  const Element real = read_element(in);
  const std::size_t width = type_size(real.type);
  if (width == 0 || real.type == miUTF8) malformed("unsupported real-part data type for '" + name + "'");
  const auto rows = static_cast<std::size_t>(dims[0]);
  const auto cols = static_cast<std::size_t>(dims[1]);
  if (cols != 0 && rows > std::numeric_limits<std::size_t>::max() / cols) malformed("dimension overflow");
  if (real.data.size() != rows * cols * width) {
    malformed("real part of '" + name + "' does not match its dimensions");
  }

  MatArray array;
  array.source_class = cls == mxDOUBLE ? MatClass::kDouble
                       : cls == mxSINGLE ? MatClass::kSingle
                                         : MatClass::kInt16;
  array.values = Grid<double>(rows, cols);
  // Column-major on disk.
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      array.values(r, c) = convert_value(in, real.type, real.data.data() + (c * rows + r) * width);
    }
  }
  file.arrays[name] = std::move(array);
}

void parse_elements(Reader& in, bool swap, Mat5File& file, bool inside_compressed) {
  while (!in.at_end()) {
    // Trailing padding shorter than a tag.
    if (in.remaining() < 8) {
      if (inside_compressed) malformed("truncated element tag");
      break;
    }
    const Element e = read_element(in);
    if (e.type == miMATRIX) {
      if (!e.data.empty()) parse_matrix(e.data, swap, file);
    } else if (e.type == miCOMPRESSED) {
      if (inside_compressed) malformed("nested compressed element");
      const auto inflated = inflate_all(e.data);
      Reader inner(inflated, swap);
      parse_elements(inner, swap, file, true);
    } else {
      file.warnings.push_back("skipped top-level element of type " + std::to_string(e.type));
    }
  }
}

}  // namespace

const MatArray& Mat5File::get(const std::string& name) const {
  if (auto it = arrays.find(name); it != arrays.end()) return it->second;
  if (auto it = skipped.find(name); it != skipped.end()) {
    fail(ErrorKind::kInvalidInput, "MAT variable '" + name + "' is unsupported: " + it->second);
  }
  fail(ErrorKind::kInvalidInput, "MAT variable '" + name + "' not found");
}

Mat5File parse_mat5(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) malformed("bad header: fewer than 128 bytes");
  const char e0 = static_cast<char>(bytes[126]);
  const char e1 = static_cast<char>(bytes[127]);
  bool swap;
  if (e0 == 'I' && e1 == 'M') {
    swap = std::endian::native != std::endian::little;
  } else if (e0 == 'M' && e1 == 'I') {
    swap = std::endian::native != std::endian::big;
  } else {
    malformed("bad header: endian indicator is neither 'IM' nor 'MI'");
  }
  if (std::memcmp(bytes.data(), "MATLAB", 6) != 0) malformed("bad header: missing MATLAB magic");
  const auto version = Reader(bytes, swap).load<std::uint16_t>(bytes.data() + 124);
  if (version != 0x0100) malformed("bad header: unsupported version " + std::to_string(version));

  Mat5File file;
  Reader body(bytes.subspan(kHeaderSize), swap);
  parse_elements(body, swap, file, false);
  return file;
}

}  // namespace bmode
