#include "xlqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "xlqa/errors.hpp"

namespace xlqa::checkpoint {

namespace {

constexpr char kMagic[8] = {'X', 'L', 'Q', 'A', 'C', 'K', 'P', 'T'};
static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

struct RawTensor {
  ad::Shape shape;
  std::vector<double> values;
};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("checkpoint truncated while reading " + what);
  }
  return value;
}

void put_tensor(std::ostream& out, const std::string& name, const ad::Shape& shape,
                std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void put_params(std::ostream& out, const model::ParamSet& params) {
  for (const auto& p : params.items()) put_tensor(out, p.name, p.tensor.shape(), p.tensor.values());
}

void put_adam(std::ostream& out, const std::string& prefix, const model::ParamSet& params,
              const trainer::AdamState& state) {
  if (!state.initialized()) return;
  const auto items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const ad::Shape flat = {state.m[i].size()};
    put_tensor(out, prefix + ".m/" + items[i].name, flat, state.m[i]);
    put_tensor(out, prefix + ".v/" + items[i].name, flat, state.v[i]);
  }
}

nlohmann::json adam_header(const trainer::AdamState& s) {
  return {{"initialized", s.initialized()},
          {"t", s.t},
          {"beta1", s.beta1},
          {"beta2", s.beta2},
          {"eps", s.eps}};
}

RawTensor take(std::map<std::string, RawTensor>& tensors, const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
  RawTensor t = std::move(it->second);
  tensors.erase(it);
  return t;
}

void restore_params(const model::ParamSet& params, std::map<std::string, RawTensor>& tensors) {
  for (const auto& p : params.items()) {
    auto raw = take(tensors, p.name);
    if (raw.shape != p.tensor.shape()) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + ad::shape_str(raw.shape) +
                      ", expected " + ad::shape_str(p.tensor.shape()));
    }
    auto target = p.tensor;
    std::copy(raw.values.begin(), raw.values.end(), target.mutable_values().begin());
  }
}

trainer::AdamState restore_adam(const nlohmann::json& header, const std::string& prefix,
                                const model::ParamSet& params,
                                std::map<std::string, RawTensor>& tensors) {
  trainer::AdamState s;
  s.t = header.at("t").get<std::uint64_t>();
  s.beta1 = header.at("beta1").get<double>();
  s.beta2 = header.at("beta2").get<double>();
  s.eps = header.at("eps").get<double>();
  if (!header.at("initialized").get<bool>()) return s;
  for (const auto& p : params.items()) {
    auto m = take(tensors, prefix + ".m/" + p.name);
    auto v = take(tensors, prefix + ".v/" + p.name);
    if (m.values.size() != p.tensor.size() || v.values.size() != p.tensor.size()) {
      throw DataError("checkpoint optimizer buffer size mismatch for '" + p.name + "'");
    }
    s.m.push_back(std::move(m.values));
    s.v.push_back(std::move(v.values));
  }
  return s;
}

}  // namespace

nlohmann::json encoder_config_to_json(const model::EncoderConfig& c) {
  return {{"num_layers", c.num_layers},     {"num_heads", c.num_heads},
          {"hidden_dim", c.hidden_dim},     {"ff_dim", c.ff_dim},
          {"vocab_size", c.vocab_size},     {"max_seq_len", c.max_seq_len},
          {"num_segments", c.num_segments}, {"dropout_rate", c.dropout_rate},
          {"seed", c.seed}};
}

model::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  try {
    model::EncoderConfig c;
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.num_segments = j.at("num_segments").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad encoder config: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const model::QAModel& model,
          const model::Discriminator* disc, const trainer::TrainState& state,
          const nlohmann::json& meta) {
  const auto qa_params = model.params();
  const auto disc_params = disc ? disc->params() : model::ParamSet{};

  nlohmann::ordered_json header;
  header["format"] = "xlqa-checkpoint";
  header["version"] = kVersion;
  header["encoder"] = encoder_config_to_json(model.encoder.config);
  header["discriminator"] =
      disc ? nlohmann::json{{"labels", disc->num_labels()}, {"input_dim", disc->input_dim()}}
           : nlohmann::json(nullptr);
  header["step"] = state.step;
  header["adam"] = adam_header(state.qa);
  header["disc_adam"] = adam_header(state.disc);
  header["meta"] = meta;
  const std::string header_text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    put_params(out, qa_params);
    put_adam(out, "adam", qa_params, state.qa);
    if (disc) {
      put_params(out, disc_params);
      put_adam(out, "disc_adam", disc_params, state.disc);
    }
    if (!out.flush()) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic))) throw IoError("checkpoint truncated: " + path.string());
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint (bad magic): " + path.string());
  }
  const auto header_len = get<std::uint64_t>(in, "header length");
  if (header_len > (1u << 26)) throw DataError("checkpoint header length is implausible");
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError("checkpoint truncated in header: " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  try {
    if (header.at("format") != "xlqa-checkpoint") throw DataError("unknown checkpoint format");
    const int version = header.at("version").get<int>();
    if (version != kVersion) {
      throw DataError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kVersion) + ")");
    }

    std::map<std::string, RawTensor> tensors;
    while (in.peek() != std::char_traits<char>::eof()) {
      const auto name_len = get<std::uint32_t>(in, "tensor name length");
      if (name_len > 4096) throw DataError("checkpoint tensor name length is implausible");
      std::string name(name_len, '\0');
      if (!in.read(name.data(), name_len)) throw IoError("checkpoint truncated in tensor name");
      const auto rank = get<std::uint32_t>(in, "tensor rank of " + name);
      if (rank > 2) throw DataError("checkpoint tensor '" + name + "' has rank > 2");
      RawTensor t;
      for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(in, "dims"));
      const auto count = ad::num_elements(t.shape);
      if (count > (std::size_t{1} << 32)) throw DataError("checkpoint tensor is implausibly large");
      t.values.resize(count);
      if (!in.read(reinterpret_cast<char*>(t.values.data()),
                   static_cast<std::streamsize>(count * sizeof(double)))) {
        throw IoError("checkpoint truncated in tensor '" + name + "'");
      }
      if (!tensors.emplace(name, std::move(t)).second) {
        throw DataError("checkpoint repeats tensor '" + name + "'");
      }
    }

    const auto config = encoder_config_from_json(header.at("encoder"));
    config.validate();
    Checkpoint ck{model::QAModel::init(config), std::nullopt, {}, header.at("meta")};
    restore_params(ck.model.params(), tensors);
    ck.state.step = header.at("step").get<std::uint64_t>();
    ck.state.qa = restore_adam(header.at("adam"), "adam", ck.model.params(), tensors);
    if (!header.at("discriminator").is_null()) {
      std::mt19937_64 rng(0);
      ck.disc = model::Discriminator::init(header["discriminator"].at("input_dim").get<std::size_t>(),
                                           header["discriminator"].at("labels").get<std::size_t>(),
                                           rng);
      restore_params(ck.disc->params(), tensors);
      ck.state.disc = restore_adam(header.at("disc_adam"), "disc_adam", ck.disc->params(), tensors);
    }
    if (!tensors.empty()) {
      throw DataError("checkpoint has unexpected tensor '" + tensors.begin()->first + "'");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

}  // namespace xlqa::checkpoint
