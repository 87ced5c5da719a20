#include "seqbelief/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"

namespace seqbelief {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'B', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t pos) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

codec::json dims_to_json(const ModelDims& d) {
  return {{"d_emb", d.d_emb},
          {"d_e", d.d_e},
          {"d_s", d.d_s},
          {"hidden_width", d.hidden_width},
          {"hidden_layers", d.hidden_layers},
          {"token_dim", d.token_dim},
          {"dropout", d.dropout}};
}

ModelDims dims_from_json(const codec::json& j) {
  ModelDims d;
  d.d_emb = j.at("d_emb").get<std::size_t>();
  d.d_e = j.at("d_e").get<std::size_t>();
  d.d_s = j.at("d_s").get<std::size_t>();
  d.hidden_width = j.at("hidden_width").get<std::size_t>();
  d.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  d.token_dim = j.at("token_dim").get<std::size_t>();
  d.dropout = j.at("dropout").get<double>();
  d.validate();
  return d;
}

void append_set(Container& c, const ParameterSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) c.tensors.emplace_back(params.name(i), params[i]);
}

/// Copy tensors named like `params` entries into it, checking shapes.
void fill_set(ParameterSet& params, const Container& c, std::string_view what) {
  std::size_t found = 0;
  for (const auto& [name, t] : c.tensors) {
    auto idx = params.find(name);
    if (!idx) continue;
    if (!params[*idx].same_shape(t)) {
      throw InvalidInput(std::string(what) + " tensor '" + name + "' has shape " + shape_string(t.shape()) +
                         ", expected " + shape_string(params[*idx].shape()));
    }
    params[*idx] = t;
    ++found;
  }
  if (found != params.size()) throw InvalidInput(std::string(what) + " is missing parameter tensors");
}

codec::json history_to_json(const std::vector<HistoryRow>& rows) {
  codec::json out = codec::json::array();
  for (const auto& r : rows) {
    out.push_back({{"round", r.round},
                   {"split", r.split},
                   {"elbo", r.elbo},
                   {"kl", r.kl},
                   {"constraint", r.constraint},
                   {"f1", r.f1}});
  }
  return out;
}

std::vector<HistoryRow> history_from_json(const codec::json& j) {
  std::vector<HistoryRow> rows;
  for (const auto& r : j) {
    rows.push_back({r.at("round").get<std::size_t>(), r.at("split").get<std::string>(), r.at("elbo").get<double>(),
                    r.at("kl").get<double>(), r.at("constraint").get<double>(), r.at("f1").get<double>()});
  }
  return rows;
}

}  // namespace

std::string encode_container(const Container& c) {
  codec::json header = c.header_json.empty() ? codec::json::object() : codec::json::parse(c.header_json);
  codec::json index = codec::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  header["tensors"] = std::move(index);
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, h.size());
  out += h;
  out.reserve(out.size() + offset);
  for (const auto& entry : c.tensors) {
    for (double v : entry.second.data()) put_le<double>(out, v);
  }
  return out;
}

Container decode_container(std::string_view bytes) {
  constexpr std::size_t prefix = sizeof kMagic + 4 + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw InvalidInput("not a seqbelief container (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, sizeof kMagic);
  if (version == 0 || version > kContainerVersion) {
    throw InvalidInput("unsupported container version " + std::to_string(version));
  }
  const auto hlen = get_le<std::uint64_t>(bytes, sizeof kMagic + 4);
  if (hlen > bytes.size() - prefix) throw InvalidInput("truncated container header");
  Container c;
  try {
    auto header = codec::json::parse(bytes.substr(prefix, hlen));
    const std::string_view payload = bytes.substr(prefix + hlen);
    for (const auto& entry : header.at("tensors")) {
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      std::size_t n = 1;
      for (auto d : shape) n *= d;
      if (shape.empty() || n == 0 || offset > payload.size() || n > (payload.size() - offset) / sizeof(double)) {
        throw InvalidInput("container tensor '" + entry.at("name").get<std::string>() + "' lies outside the payload");
      }
      std::vector<double> data(n);
      for (std::size_t i = 0; i < n; ++i) data[i] = get_le<double>(payload, offset + i * sizeof(double));
      c.tensors.emplace_back(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    header.erase("tensors");
    c.header_json = header.dump();
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed container header: ") + e.what());
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Container c;
  const codec::json header = {{"kind", "model"},
                              {"version", ckpt.version},
                              {"config", codec::config_to_json(ckpt.config)},
                              {"scaler", codec::scaler_to_json(ckpt.scaler)},
                              {"dims", dims_to_json(ckpt.gen.dims)},
                              {"sigma_obs", ckpt.gen.sigma_obs},
                              {"tau", ckpt.inf.tau},
                              {"history", history_to_json(ckpt.history)}};
  c.header_json = header.dump();
  append_set(c, ckpt.gen.params);
  append_set(c, ckpt.inf.params);
  return encode_container(c);
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  const Container c = decode_container(bytes);
  try {
    const auto h = codec::json::parse(c.header_json);
    if (h.at("kind").get<std::string>() != "model") throw InvalidInput("container does not hold a model checkpoint");
    Checkpoint ckpt;
    ckpt.version = h.at("version").get<std::uint32_t>();
    ckpt.config = codec::config_from_json(h.at("config"));
    ckpt.scaler = codec::scaler_from_json(h.at("scaler"));
    const ModelDims dims = dims_from_json(h.at("dims"));
    ckpt.gen = GenParams(dims, h.at("sigma_obs").get<double>());
    ckpt.inf = InfParams(dims, h.at("tau").get<double>());
    fill_set(ckpt.gen.params, c, "generative set");
    fill_set(ckpt.inf.params, c, "inference set");
    ckpt.history = history_from_json(h.at("history"));
    if (ckpt.scaler.d_e != dims.d_e || ckpt.scaler.d_emb != dims.d_emb) {
      throw InvalidInput("checkpoint scaler and model dimensions disagree");
    }
    return ckpt;
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::string serialize_generator(const GenParams& gen) {
  Container c;
  c.header_json = codec::json{{"kind", "generator"}, {"dims", dims_to_json(gen.dims)}, {"sigma_obs", gen.sigma_obs}}
                      .dump();
  append_set(c, gen.params);
  return encode_container(c);
}

GenParams deserialize_generator(std::string_view bytes) {
  const Container c = decode_container(bytes);
  try {
    const auto h = codec::json::parse(c.header_json);
    if (h.at("kind").get<std::string>() != "generator") {
      throw InvalidInput("container does not hold generator parameters");
    }
    GenParams gen(dims_from_json(h.at("dims")), h.at("sigma_obs").get<double>());
    fill_set(gen.params, c, "generator");
    return gen;
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed generator header: ") + e.what());
  }
}

void save_generator(const std::filesystem::path& path, const GenParams& gen) {
  write_file_atomic(path, serialize_generator(gen));
}

GenParams load_generator(const std::filesystem::path& path) { return deserialize_generator(read_file(path)); }

}  // namespace seqbelief
