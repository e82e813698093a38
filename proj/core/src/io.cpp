#include "wmguide/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wmguide/errors.hpp"

namespace wmguide::harness {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host order, which must be little-endian");

namespace {

constexpr char kMagic[4] = {'W', 'M', 'T', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(std::string_view& in, std::string_view origin) {
  if (in.size() < sizeof(T)) {
    throw InvalidArgument("tensor file " + std::string(origin) + " is truncated");
  }
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TensorFile TensorFile::from(const Tensor& t) {
  const Shape& s = t.shape();
  return TensorFile{{s.channels, s.height, s.width}, t.data()};
}

Tensor TensorFile::to_tensor() const {
  if (dims.size() != 3) throw InvalidArgument("tensor file does not hold a rank-3 tensor");
  return Tensor(Shape{dims[0], dims[1], dims[2]}, data);
}

std::string TensorFile::encode() const {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  if (count != data.size()) throw InvalidArgument("TensorFile: dims do not match payload");
  std::string out(kMagic, 4);
  put<std::uint64_t>(out, dims.size());
  for (auto d : dims) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  return out;
}

TensorFile TensorFile::decode(std::string_view in, std::string_view origin) {
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw InvalidArgument(std::string(origin) + " is not a tensor file (bad magic)");
  }
  in.remove_prefix(4);
  TensorFile f;
  const auto rank = take<std::uint64_t>(in, origin);
  if (rank > 8) throw InvalidArgument(std::string(origin) + ": implausible tensor rank");
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    f.dims.push_back(take<std::uint64_t>(in, origin));
    count *= f.dims.back();
  }
  if (in.size() != count * sizeof(double)) {
    throw InvalidArgument("tensor file " + std::string(origin) + " payload length mismatch");
  }
  f.data.resize(count);
  std::memcpy(f.data.data(), in.data(), in.size());
  return f;
}

void TensorFile::save(const std::filesystem::path& path) const { atomic_write(path, encode()); }

TensorFile TensorFile::load(const std::filesystem::path& path) {
  return decode(read_file(path), path.string());
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  TensorFile::from(t).save(path);
}

Tensor load_tensor(const std::filesystem::path& path) { return TensorFile::load(path).to_tensor(); }

void save_netpbm(const std::filesystem::path& path, const Image& x) {
  const Shape& s = x.shape();
  if (s.channels != 1 && s.channels != 3) {
    throw InvalidArgument("save_netpbm: need 1 or 3 channels");
  }
  std::string out = (s.channels == 1 ? "P5\n" : "P6\n") + std::to_string(s.width) + " " +
                    std::to_string(s.height) + "\n255\n";
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t xx = 0; xx < s.width; ++xx) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        const double v = std::clamp(x.at(c, y, xx), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  atomic_write(path, out);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw InvalidArgument("CsvTable: row width mismatch");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  const auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += csv_field(r[i]);
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvTable::save(const std::filesystem::path& path) const { atomic_write(path, str()); }

std::string bits_to_string(const std::vector<std::uint8_t>& bits) {
  std::string s;
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

std::vector<std::uint8_t> bits_from_string(std::string_view s) {
  std::vector<std::uint8_t> bits;
  for (char c : s) {
    if (c != '0' && c != '1') throw InvalidArgument("message must be a string of 0/1");
    bits.push_back(c == '1');
  }
  return bits;
}

}  // namespace wmguide::harness
