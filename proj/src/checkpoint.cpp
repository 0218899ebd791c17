#include "vogue/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>
#include <vector>

#include "vogue/config.hpp"
#include "vogue/error.hpp"
#include "vogue/rng.hpp"

namespace vogue {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Bytes = std::vector<char>;

template <class T>
void put(Bytes& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get(const Bytes& in, std::size_t& pos, std::size_t limit) {
  if (pos + sizeof(T) > limit) throw FormatError("checkpoint: unexpected end of data");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint64_t checksum(const char* data, std::size_t n) { return fnv1a64(std::string_view(data, n)); }

template <class Real>
constexpr const char* dtype_name() {
  return std::is_same_v<Real, float> ? "f32" : "f64";
}

template <class Real>
void put_tensors(Bytes& out, nlohmann::json& manifest, const std::string& prefix, const TensorMap<Real>& ts) {
  for (const auto& [name, t] : ts) {
    manifest.push_back({{"name", prefix + name}, {"dtype", dtype_name<Real>()}, {"shape", t.shape()}});
    const auto* p = reinterpret_cast<const char*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * sizeof(Real));
  }
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct Parsed {
  nlohmann::json header;
  std::size_t body = 0;   // offset of the first array
  std::size_t limit = 0;  // offset of the checksum
};

Parsed parse_envelope(const Bytes& bytes, const std::string& path) {
  const std::size_t magic_len = std::strlen(kCheckpointMagic);
  if (bytes.size() < magic_len || std::memcmp(bytes.data(), kCheckpointMagic, magic_len) != 0) {
    throw FormatError("checkpoint: '" + path + "' lacks the " + kCheckpointMagic + " magic");
  }
  if (bytes.size() < magic_len + 4 + 8 + 8) throw ChecksumError("checkpoint: '" + path + "' is truncated");
  Parsed p;
  p.limit = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + p.limit, 8);
  if (stored != checksum(bytes.data(), p.limit)) {
    throw ChecksumError("checkpoint: checksum mismatch in '" + path + "' (corrupt or truncated)");
  }
  std::size_t pos = magic_len;
  const auto version = get<std::uint32_t>(bytes, pos, p.limit);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: '" + path + "' has format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = get<std::uint64_t>(bytes, pos, p.limit);
  if (pos + header_len > p.limit) throw FormatError("checkpoint: header overruns the file");
  p.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len), nullptr, false);
  if (p.header.is_discarded()) throw FormatError("checkpoint: header is not valid JSON");
  p.body = pos + header_len;
  return p;
}

}  // namespace

template <class Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ckpt) {
  nlohmann::json manifest = nlohmann::json::array();
  Bytes body;
  put_tensors(body, manifest, "param/", ckpt.params);
  put_tensors(body, manifest, "adam.m/", ckpt.adam.m);
  put_tensors(body, manifest, "adam.v/", ckpt.adam.v);
  const nlohmann::json header = {{"precision", dtype_name<Real>()},
                                 {"policy", policy_to_json(ckpt.policy)},
                                 {"adam_step", ckpt.adam.step},
                                 {"meta", ckpt.meta},
                                 {"tensors", manifest}};
  const std::string h = header.dump();

  Bytes out(kCheckpointMagic, kCheckpointMagic + std::strlen(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), body.begin(), body.end());
  put<std::uint64_t>(out, checksum(out.data(), out.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("checkpoint: cannot write '" + tmp + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("checkpoint: short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("checkpoint: cannot move into '" + path + "'");
}

std::string checkpoint_precision(const std::string& path) {
  const Bytes bytes = read_file(path);
  const Parsed p = parse_envelope(bytes, path);
  return p.header.value("precision", "");
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  const Bytes bytes = read_file(path);
  const Parsed p = parse_envelope(bytes, path);
  const std::string precision = p.header.value("precision", "");
  if (precision != dtype_name<Real>()) {
    throw FormatError("checkpoint: '" + path + "' stores " + precision + " tensors, refusing to load as " +
                      dtype_name<Real>());
  }
  Checkpoint<Real> ck;
  try {
    ck.policy = policy_from_json(p.header.at("policy"));
    ck.adam.step = p.header.at("adam_step").get<std::uint64_t>();
    ck.meta = p.header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  std::size_t pos = p.body;
  for (const auto& entry : p.header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    if (entry.at("dtype").get<std::string>() != dtype_name<Real>()) {
      throw FormatError("checkpoint: tensor '" + name + "' has a mixed dtype");
    }
    const Shape shape = entry.at("shape").get<Shape>();
    Tensor<Real> t(shape);
    const std::size_t n = t.numel() * sizeof(Real);
    if (pos + n > p.limit) throw FormatError("checkpoint: tensor '" + name + "' overruns the file");
    std::memcpy(t.data().data(), bytes.data() + pos, n);
    pos += n;
    const auto slash = name.find('/');
    const std::string group = name.substr(0, slash), key = name.substr(slash + 1);
    if (group == "param") ck.params.emplace(key, std::move(t));
    else if (group == "adam.m") ck.adam.m.emplace(key, std::move(t));
    else if (group == "adam.v") ck.adam.v.emplace(key, std::move(t));
    else throw FormatError("checkpoint: unknown tensor group in '" + name + "'");
  }
  if (pos != p.limit) throw FormatError("checkpoint: trailing bytes after the tensor arrays");
  return ck;
}

template void save_checkpoint(const std::string&, const Checkpoint<float>&);
template void save_checkpoint(const std::string&, const Checkpoint<double>&);
template Checkpoint<float> load_checkpoint(const std::string&);
template Checkpoint<double> load_checkpoint(const std::string&);

}  // namespace vogue
