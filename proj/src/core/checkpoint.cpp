#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsr {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'R', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ >= bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::uint8_t byte(std::size_t i) const { return static_cast<std::uint8_t>(bytes_[i]); }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  for (const Network::StateEntry& e : net.state()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < e.tensor.numel(); ++i) put_f64(out, e.tensor.data()[i]);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(std::move(bytes));
  if (r.str(4) != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path.string());

  std::map<std::string, std::pair<Shape, std::vector<double>>> entries;
  while (!r.done()) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = r.f64();
    if (!entries.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data))).second)
      throw std::runtime_error("checkpoint: duplicate entry in " + path.string());
  }

  std::size_t used = 0;
  for (const Network::StateEntry& e : net.state()) {
    auto it = entries.find(e.name);
    if (it == entries.end())
      throw std::runtime_error("checkpoint: missing tensor '" + e.name + "' in " + path.string());
    if (it->second.first != e.tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + e.name + "': file has " +
                               shape_str(it->second.first) + ", model has " +
                               shape_str(e.tensor.shape()));
    Tensor t = e.tensor;
    std::memcpy(t.data(), it->second.second.data(), t.numel() * sizeof(double));
    ++used;
  }
  if (used != entries.size())
    throw std::runtime_error("checkpoint: file contains tensors unknown to the model");
}

}  // namespace fsr
