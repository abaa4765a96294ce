#include "gapccot/checkpoint.hpp"

#include <bit>
#include <cstdint>

#include <json.hpp>

#include "gapccot/errors.hpp"
#include "gapccot/io.hpp"

namespace gapccot {

namespace {

constexpr std::string_view kMagic = "GCOT1";

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("GCOT1 checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json manifest_of(const GapCcotConfig& cfg) {
  const auto& d = cfg.denoiser;
  return {{"format", "GCOT1"},
          {"stages", cfg.stages},
          {"normalized_init", cfg.normalized_init},
          {"bands", d.bands},
          {"base_channels", d.base_channels},
          {"cot_kernel", d.cot_kernel},
          {"heads", d.heads},
          {"reduction", d.reduction},
          {"residual", d.residual}};
}

struct Record {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Parsed {
  std::vector<Record> records;
  nlohmann::json manifest;
};

Parsed parse(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError("bad GCOT1 magic");
  Reader in(bytes.substr(kMagic.size()));
  Parsed p;
  const auto count = in.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    r.name = std::string(in.take(in.le<std::uint32_t>()));
    const auto rank = in.le<std::uint32_t>();
    if (rank > 8) throw FormatError("GCOT1 record '" + r.name + "' has implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(in.le<std::uint64_t>());
    const std::size_t n = numel(r.shape);
    if (n > bytes.size()) throw FormatError("GCOT1 record '" + r.name + "' larger than file");
    r.values.resize(n);
    for (auto& v : r.values) v = std::bit_cast<float>(in.le<std::uint32_t>());
    p.records.push_back(std::move(r));
  }
  const auto manifest_len = in.le<std::uint64_t>();
  if (manifest_len > bytes.size()) throw FormatError("GCOT1 manifest length exceeds file");
  auto text = in.take(static_cast<std::size_t>(manifest_len));
  if (!in.done()) throw FormatError("GCOT1 checkpoint has trailing bytes");
  try {
    p.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GCOT1 manifest is not valid JSON: ") + e.what());
  }
  return p;
}

}  // namespace

template <typename T>
std::string encode_checkpoint(const GapCcotNet<T>& net) {
  const auto params = net.parameters();
  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put_le<std::uint64_t>(out, d);
    for (T v : p.tensor.data())
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  const std::string manifest = manifest_of(net.config()).dump();
  put_le<std::uint64_t>(out, manifest.size());
  out += manifest;
  return out;
}

template <typename T>
void decode_checkpoint(std::string_view bytes, GapCcotNet<T>& net) {
  Parsed parsed = parse(bytes);
  auto params = net.parameters();
  if (parsed.records.size() != params.size()) {
    throw FormatError("GCOT1 checkpoint has " + std::to_string(parsed.records.size()) +
                      " tensors, network expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& r = parsed.records[i];
    if (r.name != params[i].name) {
      throw FormatError("GCOT1 record '" + r.name + "' where '" + params[i].name + "' expected");
    }
    if (r.shape != params[i].tensor.shape()) {
      throw FormatError("GCOT1 record '" + r.name + "' has shape " + to_string(r.shape) +
                        ", expected " + to_string(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    const auto& src = parsed.records[i].values;
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<T>(src[k]);
  }
}

GapCcotConfig checkpoint_config(std::string_view bytes) {
  const auto m = parse(bytes).manifest;
  try {
    GapCcotConfig cfg;
    cfg.stages = m.at("stages").get<std::size_t>();
    cfg.normalized_init = m.at("normalized_init").get<bool>();
    cfg.denoiser.bands = m.at("bands").get<std::size_t>();
    cfg.denoiser.base_channels = m.at("base_channels").get<std::size_t>();
    cfg.denoiser.cot_kernel = m.at("cot_kernel").get<std::size_t>();
    cfg.denoiser.heads = m.at("heads").get<std::size_t>();
    cfg.denoiser.reduction = m.at("reduction").get<std::size_t>();
    cfg.denoiser.residual = m.at("residual").get<bool>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GCOT1 manifest incomplete: ") + e.what());
  }
}

template <typename T>
void save_checkpoint(const GapCcotNet<T>& net, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(net));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, GapCcotNet<T>& net) {
  const std::string bytes = read_file(path);
  try {
    decode_checkpoint(bytes, net);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

GapCcotNet<float> load_network(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    GapCcotNet<float> net(checkpoint_config(bytes), 0);
    decode_checkpoint(bytes, net);
    return net;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": manifest describes an invalid network: " + e.what());
  }
}

template std::string encode_checkpoint(const GapCcotNet<float>&);
template std::string encode_checkpoint(const GapCcotNet<double>&);
template void decode_checkpoint(std::string_view, GapCcotNet<float>&);
template void decode_checkpoint(std::string_view, GapCcotNet<double>&);
template void save_checkpoint(const GapCcotNet<float>&, const std::filesystem::path&);
template void save_checkpoint(const GapCcotNet<double>&, const std::filesystem::path&);
template void load_checkpoint(const std::filesystem::path&, GapCcotNet<float>&);
template void load_checkpoint(const std::filesystem::path&, GapCcotNet<double>&);

}  // namespace gapccot
