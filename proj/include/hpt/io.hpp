#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hpt/data.hpp"
#include "hpt/model.hpp"

namespace hpt {

using json = nlohmann::json;

inline constexpr std::array<char, 8> kDatasetMagic = {'H', 'P', 'T', 'D', 'S', 'E', 'T', '\0'};
inline constexpr std::array<char, 8> kCheckpointMagic = {'H', 'P', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

/// Whole-file byte buffers.
inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(concat(what_, ": truncated (needed ", n, " bytes at offset ", pos_, ", have ",
                               bytes_.size() - pos_, ")"));
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <class U>
  U le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError(concat(what_, ": ", bytes_.size() - pos_, " trailing bytes"));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::string header(const std::array<char, 8>& magic, const json& meta) {
  std::string out(magic.begin(), magic.end());
  const std::string text = meta.dump();
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  return out;
}

inline json read_header(Reader& r, const std::array<char, 8>& magic, const std::string& what) {
  auto m = r.take(8);
  if (std::memcmp(m.data(), magic.data(), 8) != 0) throw FormatError(what + ": bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kFormatVersion) {
    throw FormatError(concat(what, ": unsupported format version ", version, " (this build reads ", kFormatVersion, ")"));
  }
  const auto len = r.le<std::uint32_t>();
  auto text = r.take(len);
  try {
    json meta = json::parse(text);
    if (!meta.is_object()) throw FormatError(what + ": metadata is not a JSON object");
    return meta;
  } catch (const json::exception& e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  }
}

template <class T>
T field(const json& meta, const char* key, const std::string& what) {
  try {
    return meta.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(concat(what, ": metadata field '", key, "' missing or mistyped"));
  }
}

inline json spec_json(const EncoderSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"embed_dim", s.embed_dim},
          {"activation", to_string(s.activation)}};
}

inline EncoderSpec spec_from_json(const json& j, const std::string& what) {
  EncoderSpec s;
  s.input_dim = field<std::size_t>(j, "input_dim", what);
  s.hidden_dims = field<std::vector<std::size_t>>(j, "hidden_dims", what);
  s.embed_dim = field<std::size_t>(j, "embed_dim", what);
  try {
    s.activation = activation_from_string(field<std::string>(j, "activation", what));
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }
  return s;
}

}  // namespace detail

// ---- datasets ----

inline std::string encode_dataset(const Dataset& data) {
  data.validate();
  const json meta = {{"domain", data.domain},
                     {"num_samples", data.size()},
                     {"input_dim", data.input_dim()},
                     {"num_classes", data.num_classes}};
  std::string out = detail::header(kDatasetMagic, meta);
  out.reserve(out.size() + data.features.size() * 8 + data.size() * 4);
  for (double v : data.features.values()) detail::put_f64(out, v);
  for (Label y : data.labels) detail::put_le<std::uint32_t>(out, y);
  return out;
}

namespace detail {

/// Runs a decoder body, reporting any structural failure as a format error.
template <class F>
auto as_format_error(const std::string& what, F&& body) {
  try {
    return body();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace detail

inline Dataset decode_dataset(std::string_view bytes, const std::string& what = "dataset") {
  return detail::as_format_error(what, [&] {
    detail::Reader r(bytes, what);
    const json meta = detail::read_header(r, kDatasetMagic, what);
    const auto n = detail::field<std::size_t>(meta, "num_samples", what);
    const auto d = detail::field<std::size_t>(meta, "input_dim", what);
    Dataset out{detail::field<std::string>(meta, "domain", what), {}, {}, detail::field<std::size_t>(meta, "num_classes", what)};
    if (d != 0 && n > r.remaining() / d / 8) {
      throw FormatError(detail::concat(what, ": header declares ", n, " x ", d, " features, payload has ", r.remaining(),
                                       " bytes"));
    }
    std::vector<double> values(n * d);
    for (double& v : values) v = r.f64();
    out.features = Tensor({n, d}, std::move(values));
    out.labels.resize(n);
    for (Label& y : out.labels) y = r.le<std::uint32_t>();
    r.expect_end();
    out.validate();
    return out;
  });
}

inline void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, encode_dataset(data));
}

inline Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path), path.string()); }

// ---- checkpoints ----

struct Checkpoint {
  DualEncoderModel model;
  std::uint64_t seed = 0;
};

inline std::string encode_checkpoint(const DualEncoderModel& model, std::uint64_t seed) {
  model.validate();
  json tensors = json::array();
  const auto names = model.param_names();
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", model.params[i].shape()}});
  }
  const json meta = {{"image_spec", detail::spec_json(model.image_spec)},
                     {"text_spec", detail::spec_json(model.text_spec)},
                     {"num_classes", model.num_classes},
                     {"temperature", model.temperature},
                     {"seed", seed},
                     {"parameter_count", model.parameter_count()},
                     {"tensors", tensors}};
  std::string out = detail::header(kCheckpointMagic, meta);
  for (const auto& t : model.params)
    for (double v : t.values()) detail::put_f64(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  return detail::as_format_error(what, [&] {
    detail::Reader r(bytes, what);
    const json meta = detail::read_header(r, kCheckpointMagic, what);
    Checkpoint ck;
    DualEncoderModel& m = ck.model;
    m.image_spec = detail::spec_from_json(detail::field<json>(meta, "image_spec", what), what);
    m.text_spec = detail::spec_from_json(detail::field<json>(meta, "text_spec", what), what);
    m.num_classes = detail::field<std::size_t>(meta, "num_classes", what);
    m.temperature = detail::field<double>(meta, "temperature", what);
    ck.seed = detail::field<std::uint64_t>(meta, "seed", what);
    const auto declared = detail::field<std::size_t>(meta, "parameter_count", what);
    if (declared != m.parameter_count()) {
      throw FormatError(detail::concat(what, ": parameter_count ", declared, " disagrees with the encoder specs (",
                                       m.parameter_count(), ")"));
    }
    const auto shapes = m.param_shapes();
    const auto names = m.param_names();
    const json tensors = detail::field<json>(meta, "tensors", what);
    if (!tensors.is_array() || tensors.size() != shapes.size()) {
      throw FormatError(detail::concat(what, ": expected ", shapes.size(), " tensor entries"));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (detail::field<std::string>(tensors[i], "name", what) != names[i] ||
          detail::field<Shape>(tensors[i], "shape", what) != shapes[i]) {
        throw FormatError(detail::concat(what, ": tensor ", i, " does not match ", names[i], " ", shape_str(shapes[i])));
      }
    }
    if (r.remaining() != declared * 8) {
      throw FormatError(detail::concat(what, ": payload has ", r.remaining(), " bytes, expected ", declared * 8));
    }
    for (const Shape& s : shapes) {
      Tensor t(s);
      for (double& v : t.values()) v = r.f64();
      m.params.push_back(std::move(t));
    }
    r.expect_end();
    m.validate();
    return ck;
  });
}

inline void save_checkpoint(const DualEncoderModel& model, std::uint64_t seed, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model, seed));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace hpt
