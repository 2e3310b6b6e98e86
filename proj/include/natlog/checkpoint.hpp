#pragma once

// Binary checkpoint container:
//   "NLCK" | u32 version | u64 manifest length | manifest JSON
//   | u32 array count | per array: u32 name length, name, u64 element count, f32 data
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <type_traits>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/encoder.hpp"
#include "natlog/error.hpp"
#include "natlog/model.hpp"

namespace natlog {

inline constexpr char kCheckpointMagic[4] = {'N', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<float> data;
  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocabulary;
  std::uint64_t epoch = 0;
  std::uint64_t optimizer_step = 0;
  double dev_accuracy = 0.0;
  std::vector<NamedArray> parameters;
  std::vector<NamedArray> first_moments;   ///< Adam m, same order as parameters
  std::vector<NamedArray> second_moments;  ///< Adam v

  const NamedArray& parameter(const std::string& name) const {
    for (const auto& a : parameters)
      if (a.name == name) return a;
    throw ValidationError("checkpoint has no parameter '" + name + "'");
  }
};

namespace detail {

template <class U>
void put(std::string& out, U x) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float f) { put(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    static_assert(std::is_unsigned_v<U>);
    need(sizeof(U));
    U x = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      x |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return x;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline void put_array(std::string& out, const NamedArray& a) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
  out += a.name;
  put<std::uint64_t>(out, a.data.size());
  for (float f : a.data) put_f32(out, f);
}

inline NamedArray get_array(Reader& in) {
  NamedArray a;
  a.name = in.get_string(in.get<std::uint32_t>());
  const auto n = in.get<std::uint64_t>();
  a.data.resize(n);
  for (auto& f : a.data) f = in.get_f32();
  return a;
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  nlohmann::json manifest = {{"config", ck.config},
                             {"vocabulary", ck.vocabulary},
                             {"epoch", ck.epoch},
                             {"optimizer_step", ck.optimizer_step},
                             {"dev_accuracy", ck.dev_accuracy},
                             {"parameter_count", ck.parameters.size()},
                             {"has_moments", !ck.first_moments.empty()}};
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, text.size());
  out += text;
  const std::size_t count = ck.parameters.size() + ck.first_moments.size() + ck.second_moments.size();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(count));
  for (const auto& a : ck.parameters) detail::put_array(out, a);
  for (const auto& a : ck.first_moments) detail::put_array(out, a);
  for (const auto& a : ck.second_moments) detail::put_array(out, a);
  return out;
}

inline Checkpoint deserialize(const std::string& bytes) {
  detail::Reader in(bytes);
  if (in.get_string(4) != std::string(kCheckpointMagic, 4)) throw ParseError("not a checkpoint file");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto len = in.get<std::uint64_t>();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.get_string(len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad checkpoint manifest: ") + e.what());
  }
  Checkpoint ck;
  ck.config = manifest.at("config").get<ModelConfig>();
  ck.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
  ck.epoch = manifest.at("epoch").get<std::uint64_t>();
  ck.optimizer_step = manifest.at("optimizer_step").get<std::uint64_t>();
  ck.dev_accuracy = manifest.at("dev_accuracy").get<double>();
  const auto np = manifest.at("parameter_count").get<std::size_t>();
  const bool moments = manifest.at("has_moments").get<bool>();
  const auto count = in.get<std::uint32_t>();
  if (count != np * (moments ? 3 : 1)) throw ParseError("checkpoint array count disagrees with manifest");
  for (std::size_t i = 0; i < np; ++i) ck.parameters.push_back(detail::get_array(in));
  if (moments) {
    for (std::size_t i = 0; i < np; ++i) ck.first_moments.push_back(detail::get_array(in));
    for (std::size_t i = 0; i < np; ++i) ck.second_moments.push_back(detail::get_array(in));
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint arrays");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const std::string bytes = serialize(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// Parameter values of `model` (moments left empty).
inline Checkpoint snapshot(Model<float>& model, std::uint64_t epoch = 0) {
  Checkpoint ck;
  ck.config = model.config();
  ck.vocabulary = model.vocabulary().words();
  ck.epoch = epoch;
  for (auto* p : model.parameters()) ck.parameters.push_back({p->name, p->value});
  return ck;
}

/// Rebuild a model whose parameters are exactly the stored arrays.
inline Model<float> restore(const Checkpoint& ck) {
  Model<float> model(ck.config, Vocabulary::from_words(ck.vocabulary));
  auto params = model.parameters();
  if (params.size() != ck.parameters.size())
    throw ValidationError("checkpoint parameter count does not match the configuration");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = ck.parameters[i];
    if (a.name != params[i]->name)
      throw ValidationError("checkpoint parameter '" + a.name + "' where '" + params[i]->name + "' was expected");
    if (a.data.size() != params[i]->size())
      throw ValidationError("checkpoint parameter '" + a.name + "' has the wrong size");
    params[i]->value = a.data;
  }
  return model;
}

}  // namespace natlog
