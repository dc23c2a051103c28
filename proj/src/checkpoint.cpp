#include "deepaco/checkpoint.hpp"

#include "deepaco/error.hpp"
#include "deepaco/io.hpp"

namespace deepaco::ad {

namespace {
const std::string kMagic = "DACOCKPT";
}

std::vector<char> encode_checkpoint(const ParamStore& params, const nlohmann::json& metadata) {
  io::ByteWriter out;
  out.put_raw(kMagic.data(), kMagic.size());
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put_string(metadata.dump());
  out.put<std::uint64_t>(params.size());
  for (const auto& p : params.params()) {
    out.put_string(p.name);
    out.put<std::uint64_t>(p.value.rows());
    out.put<std::uint64_t>(p.value.cols());
    out.put_raw(p.value.data(), p.value.size() * sizeof(double));
  }
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  io::ByteReader in(bytes, "checkpoint");
  if (in.get_raw_string(kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    ck.metadata = nlohmann::json::parse(in.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    auto name = in.get_string();
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    Tensor t(rows, cols);
    in.get_raw(t.data(), t.size() * sizeof(double));
    ck.params.add(name, std::move(t));
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& metadata) {
  io::write_file_bytes(path, encode_checkpoint(params, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file_bytes(path));
}

}  // namespace deepaco::ad
