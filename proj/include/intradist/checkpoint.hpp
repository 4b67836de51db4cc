// Parameter checkpoint: a flat binary record (config echo, segment names,
// 64-bit little-endian values) plus a plain-text metadata sidecar next to it.
#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "intradist/io.hpp"
#include "intradist/model.hpp"

namespace intradist {

inline constexpr char kCheckpointMagic[8] = {'I', 'D', 'C', 'H', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json mlp_config_to_json(const MlpConfig& c) {
  return nlohmann::json{{"input-dim", c.input_dim},
                        {"hidden-dims", c.hidden_dims},
                        {"output-dim", c.output_dim},
                        {"task", task_name(c.task)},
                        {"dropout-rate", c.dropout_rate}};
}

inline MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.input_dim = j.at("input-dim").get<std::int64_t>();
  c.hidden_dims = j.at("hidden-dims").get<std::vector<std::int64_t>>();
  c.output_dim = j.at("output-dim").get<std::int64_t>();
  c.task = task_from_name(j.at("task").get<std::string>());
  c.dropout_rate = j.at("dropout-rate").get<double>();
  c.validate();
  return c;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string path)
      : data_(data), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error("truncated checkpoint file " + path_);
    }
  }
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const MlpConfig& config,
                            const ParameterVector& params) {
  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  const std::string config_echo = mlp_config_to_json(config).dump();
  detail::put_u64(out, config_echo.size());
  out += config_echo;
  detail::put_u32(out, static_cast<std::uint32_t>(params.segments.size()));
  for (const auto& seg : params.segments) {
    detail::put_u32(out, static_cast<std::uint32_t>(seg.name.size()));
    out += seg.name;
    detail::put_u32(out, static_cast<std::uint32_t>(seg.tensor.shape.size()));
    for (std::int64_t d : seg.tensor.shape)
      detail::put_u64(out, static_cast<std::uint64_t>(d));
    detail::put_u64(out, static_cast<std::uint64_t>(seg.tensor.values.size()));
    for (double v : seg.tensor.values) detail::put_f64(out, v);
  }
  write_text_file(path, out);

  std::string meta;
  meta += "format-version " + std::to_string(kCheckpointVersion) + "\n";
  meta += "task " + std::string(task_name(config.task)) + "\n";
  meta += "input-dim " + std::to_string(config.input_dim) + "\n";
  meta += "hidden-dims";
  for (std::int64_t h : config.hidden_dims) meta += " " + std::to_string(h);
  meta += "\n";
  meta += "output-dim " + std::to_string(config.output_dim) + "\n";
  meta += "dropout-rate " + format_g17(config.dropout_rate) + "\n";
  meta += "parameter-count " + std::to_string(params.total_count()) + "\n";
  for (const auto& seg : params.segments) {
    meta += "segment " + seg.name + " " + std::to_string(seg.tensor.numel()) + "\n";
  }
  write_text_file(path.string() + ".meta.txt", meta);
}

struct Checkpoint {
  MlpConfig config;
  ParameterVector params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  detail::ByteReader r(data, path.string());
  if (r.bytes(sizeof(kCheckpointMagic)) !=
      std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw std::runtime_error(path.string() + " is not a checkpoint file");
  }
  if (r.u32() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  Checkpoint ck;
  const std::uint64_t config_len = r.u64();
  ck.config = mlp_config_from_json(
      nlohmann::json::parse(r.bytes(static_cast<std::size_t>(config_len))));
  const std::uint32_t segment_count = r.u32();
  for (std::uint32_t s = 0; s < segment_count; ++s) {
    ParameterVector::Segment seg;
    seg.name = r.bytes(r.u32());
    std::vector<std::int64_t> shape(r.u32());
    for (auto& d : shape) d = static_cast<std::int64_t>(r.u64());
    std::vector<double> values(static_cast<std::size_t>(r.u64()));
    for (auto& v : values) v = r.f64();
    seg.tensor = Tensor(std::move(shape), std::move(values));
    ck.params.segments.push_back(std::move(seg));
  }
  if (!r.done()) {
    throw std::runtime_error("trailing bytes in checkpoint file " + path.string());
  }
  if (ck.params.total_count() != ck.config.parameter_count()) {
    throw std::runtime_error("checkpoint " + path.string() +
                             " parameter count does not match its config echo");
  }
  return ck;
}

}  // namespace intradist
