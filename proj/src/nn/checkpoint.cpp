#include "fhm/nn/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "fhm/common/binary_io.hpp"
#include "fhm/common/error.hpp"

namespace fhm::nn {

namespace {

Tensor encode_config(const NetworkConfig& c) {
  std::vector<double> v{static_cast<double>(c.nx), static_cast<double>(c.ny), static_cast<double>(c.k),
                        static_cast<double>(c.n_z), c.dropout_rate, static_cast<double>(c.output_kernel),
                        static_cast<double>(c.conv.size())};
  for (const auto& s : c.conv) {
    v.insert(v.end(), {static_cast<double>(s.kernels), static_cast<double>(s.kernel_h),
                       static_cast<double>(s.kernel_w), static_cast<double>(s.stride_h),
                       static_cast<double>(s.stride_w)});
  }
  v.push_back(static_cast<double>(c.dense_units.size()));
  for (int u : c.dense_units) v.push_back(u);
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

NetworkConfig decode_config(const Tensor& t) {
  std::size_t pos = 0;
  auto next = [&]() -> double {
    if (pos >= t.size()) throw FormatError("checkpoint config tensor is truncated");
    return t[pos++];
  };
  auto next_int = [&]() {
    const double d = next();
    if (d != std::floor(d) || d < 0 || d > 1e9) throw FormatError("checkpoint config holds a non-integer field");
    return static_cast<int>(d);
  };
  NetworkConfig c;
  c.nx = next_int();
  c.ny = next_int();
  c.k = next_int();
  c.n_z = next_int();
  c.dropout_rate = next();
  c.output_kernel = next_int();
  c.conv.resize(static_cast<std::size_t>(next_int()));
  for (auto& s : c.conv) {
    s.kernels = next_int();
    s.kernel_h = next_int();
    s.kernel_w = next_int();
    s.stride_h = next_int();
    s.stride_w = next_int();
  }
  c.dense_units.resize(static_cast<std::size_t>(next_int()));
  for (int& u : c.dense_units) u = next_int();
  if (pos != t.size()) throw FormatError("checkpoint config tensor has trailing values");
  return c;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > UINT16_MAX) throw ValidationError("tensor name too long: " + name);
  if (t.rank() > UINT8_MAX) throw ValidationError("tensor rank too large: " + name);
  io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  for (double v : t.values()) io::write_f64(os, v);
}

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

NamedTensors read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  io::expect_magic(is, "VAE1");
  const auto version = io::read_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = io::read_le<std::uint32_t>(is, "tensor count");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = io::read_le<std::uint16_t>(is, "tensor name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (is.gcount() != len) throw LengthMismatchError("checkpoint truncated in tensor name");
    const auto rank = io::read_le<std::uint8_t>(is, "tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = io::read_le<std::uint32_t>(is, "tensor extent");
    const std::size_t n = shape_size(shape);
    if (n > (std::size_t{1} << 32)) throw FormatError("tensor '" + name + "' declares an implausible size");
    std::vector<double> data(n);
    for (double& v : data) v = io::read_f64(is, "tensor data");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw LengthMismatchError("checkpoint has trailing bytes");
  return out;
}

void assign(VaeParameters& params, const std::map<std::string, const Tensor*>& by_name, const std::string& prefix) {
  params.for_each([&](const std::string& name, Tensor& t) {
    const auto it = by_name.find(prefix + name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + prefix + name + "'");
    if (it->second->shape() != t.shape()) {
      throw FormatError("checkpoint tensor '" + prefix + name + "' has shape " +
                        shape_to_string(it->second->shape()) + ", architecture expects " + shape_to_string(t.shape()));
    }
    t = *it->second;
  });
}

}  // namespace

void save_checkpoint(const VaeNetwork& net, const std::filesystem::path& path, const AdamState* optimizer) {
  NamedTensors tensors;
  tensors.emplace_back("config", encode_config(net.config()));
  net.params().for_each([&](const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); });
  if (optimizer != nullptr && optimizer->first_moment.parameter_count() == net.params().parameter_count()) {
    tensors.emplace_back("adam.state", Tensor({2}, {static_cast<double>(optimizer->step),
                                                    static_cast<double>(optimizer->epochs_done)}));
    optimizer->first_moment.for_each([&](const std::string& name, const Tensor& t) { tensors.emplace_back("adam.m." + name, t); });
    optimizer->second_moment.for_each([&](const std::string& name, const Tensor& t) { tensors.emplace_back("adam.v." + name, t); });
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os.write("VAE1", 4);
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) write_tensor(os, name, t);
  if (!os) throw ValidationError("failed writing checkpoint " + path.string());
}

TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& path) {
  const NamedTensors tensors = read_all(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  const auto cfg = by_name.find("config");
  if (cfg == by_name.end()) throw FormatError("checkpoint has no config tensor");

  NetworkConfig config;
  try {
    config = decode_config(*cfg->second);
    config.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }
  TrainingCheckpoint out{VaeNetwork(config), std::nullopt};
  assign(out.net.params(), by_name, "");

  const auto state = by_name.find("adam.state");
  if (state != by_name.end()) {
    if (state->second->size() != 2) throw FormatError("adam.state must hold [step, epochs_done]");
    AdamState adam;
    adam.step = static_cast<std::int64_t>((*state->second)[0]);
    adam.epochs_done = static_cast<int>((*state->second)[1]);
    adam.first_moment = out.net.zero_parameters();
    adam.second_moment = out.net.zero_parameters();
    assign(adam.first_moment, by_name, "adam.m.");
    assign(adam.second_moment, by_name, "adam.v.");
    out.optimizer = std::move(adam);
  }
  return out;
}

VaeNetwork load_checkpoint(const std::filesystem::path& path) { return load_training_checkpoint(path).net; }

}  // namespace fhm::nn
