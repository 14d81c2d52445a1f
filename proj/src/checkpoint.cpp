#include "ictp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "ictp/error.hpp"

namespace ictp {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'I', 'C', 'T', 'P', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: truncated file");
  return v;
}

json config_json(const ModelConfig& c) {
  return {{"l_max", c.l_max},
          {"L_max", c.L_max},
          {"nu", c.nu},
          {"layers", c.layers},
          {"channels", c.channels},
          {"latent_channels", c.latent_channels},
          {"cutoff", c.cutoff},
          {"n_bessel", c.n_bessel},
          {"envelope_p", c.envelope_p},
          {"radial_hidden", c.radial_hidden},
          {"readout_hidden", c.readout_hidden},
          {"variant", to_string(c.variant)},
          {"species", c.species}};
}

ModelConfig config_of(const json& j) {
  ModelConfig c;
  try {
    c.l_max = j.at("l_max").get<int>();
    c.L_max = j.at("L_max").get<int>();
    c.nu = j.at("nu").get<int>();
    c.layers = j.at("layers").get<int>();
    c.channels = j.at("channels").get<int>();
    c.latent_channels = j.at("latent_channels").get<int>();
    c.cutoff = j.at("cutoff").get<double>();
    c.n_bessel = j.at("n_bessel").get<int>();
    c.envelope_p = j.at("envelope_p").get<int>();
    c.radial_hidden = j.at("radial_hidden").get<std::vector<int>>();
    c.readout_hidden = j.at("readout_hidden").get<int>();
    c.variant = parse_model_variant(j.at("variant").get<std::string>());
    c.species = j.at("species").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  return config_of(j);
}

void write_checkpoint(std::ostream& os, const Model& model, const ModelParams& params) {
  if (params.values.size() != model.num_params()) throw InvalidArgument("checkpoint: parameters do not match model");
  json header;
  header["config"] = config_json(model.config());
  header["seed"] = params.seed;
  header["shift"] = params.shift;
  header["scale"] = params.scale;
  header["precision"] = "f64";
  json blocks = json::array();
  for (const auto& b : model.layout())
    blocks.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", b.offset}, {"group", to_string(b.group)}});
  header["blocks"] = blocks;
  const std::string text = header.dump();

  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(os, params.values.size());
  os.write(reinterpret_cast<const char*>(params.values.data()),
           static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!os) throw Error("checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const Model& model, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(os, model, params);
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("checkpoint: bad magic, not a model file");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = get<std::uint64_t>(is);
  if (len > (1u << 26)) throw DataError("checkpoint: header too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: header: ") + e.what());
  }
  Checkpoint ck;
  ck.config = config_of(header.at("config"));
  Model model = [&] {
    try {
      return Model(ck.config);
    } catch (const InvalidArgument& e) {
      throw DataError(std::string("checkpoint: ") + e.what());
    }
  }();
  try {
    if (header.at("precision").get<std::string>() != "f64") throw DataError("checkpoint: unsupported precision");
    ck.params.seed = header.at("seed").get<std::uint64_t>();
    ck.params.shift = header.at("shift").get<std::vector<double>>();
    ck.params.scale = header.at("scale").get<double>();
    const auto& blocks = header.at("blocks");
    if (blocks.size() != model.layout().size()) throw DataError("checkpoint: block table does not match the model");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = model.layout()[i];
      if (blocks[i].at("name").get<std::string>() != b.name ||
          blocks[i].at("shape").get<std::vector<std::size_t>>() != b.shape ||
          blocks[i].at("offset").get<std::size_t>() != b.offset)
        throw DataError("checkpoint: block '" + b.name + "' does not match the model layout");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: header: ") + e.what());
  }
  if (ck.params.shift.size() != ck.config.species.size()) throw DataError("checkpoint: shift table size mismatch");
  const auto n = get<std::uint64_t>(is);
  if (n != model.num_params()) throw DataError("checkpoint: parameter count mismatch");
  ck.params.values.resize(n);
  if (!is.read(reinterpret_cast<char*>(ck.params.values.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw DataError("checkpoint: truncated parameter data");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model file '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace ictp
