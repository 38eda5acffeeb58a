#include "uma/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "uma/errors.hpp"

namespace uma {

namespace {

constexpr char kMagic[4] = {'U', 'M', 'A', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  for (const auto& [name, tensor] : tensors) {
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_le(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) put_le(out, v);
  }
  return out;
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a UMA1 checkpoint (bad magic)");
  }
  Reader reader(bytes);
  reader.take(sizeof(kMagic));
  NamedTensors tensors;
  while (!reader.done()) {
    const auto name_len = reader.get<std::uint32_t>();
    std::string name = reader.take(name_len);
    const auto rank = reader.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(reader.get<std::uint32_t>());
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = reader.get<double>();
    if (!tensors.emplace(name, Tensor(shape, std::move(values))).second) {
      throw ParseError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace uma
