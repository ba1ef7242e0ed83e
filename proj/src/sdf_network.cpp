#include "sartomo/sdf_network.hpp"

#include "sartomo/container.hpp"

namespace sartomo {

void NetworkConfig::validate() const {
  require(num_frequencies >= 1, ErrorCode::Config, "network: num_frequencies must be >= 1");
  require(fourier_scale > 0.0, ErrorCode::Config, "network: fourier_scale must be positive");
  require(num_layers >= 1, ErrorCode::Config, "network: num_layers must be >= 1");
  require(width >= 1, ErrorCode::Config, "network: width must be >= 1");
  require(skip_layer < num_layers, ErrorCode::Config, "network: skip_layer must be < num_layers");
  require(softplus_beta > 0.0, ErrorCode::Config, "network: softplus_beta must be positive");
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"num_frequencies", c.num_frequencies}, {"fourier_scale", c.fourier_scale},
       {"num_layers", c.num_layers},           {"width", c.width},
       {"skip_layer", c.skip_layer},           {"softplus_beta", c.softplus_beta},
       {"literal_gaussian_init", c.literal_gaussian_init}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  require(j.is_object(), ErrorCode::Config, "network config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "num_frequencies") c.num_frequencies = value.get<int>();
    else if (key == "fourier_scale") c.fourier_scale = value.get<double>();
    else if (key == "num_layers") c.num_layers = value.get<int>();
    else if (key == "width") c.width = value.get<int>();
    else if (key == "skip_layer") c.skip_layer = value.get<int>();
    else if (key == "softplus_beta") c.softplus_beta = value.get<double>();
    else if (key == "literal_gaussian_init") c.literal_gaussian_init = value.get<bool>();
    else throw Error(ErrorCode::Config, "network: unknown key '" + key + "'");
  }
  c.validate();
}

template <typename Scalar>
void SdfNetwork<Scalar>::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["kind"] = "sdfnet";
  header["config"] = config_;
  header["seed"] = seed_;
  header["center"] = {static_cast<double>(center_.x()), static_cast<double>(center_.y()),
                      static_cast<double>(center_.z())};
  header["scale"] = static_cast<double>(scale_);
  header["d_max"] = static_cast<double>(d_max_);
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(freq_.size() + params_.size()));
  for (Eigen::Index r = 0; r < freq_.rows(); ++r)
    for (Eigen::Index c = 0; c < 3; ++c) payload.push_back(static_cast<double>(freq_(r, c)));
  for (const Scalar v : params_.flatten()) payload.push_back(static_cast<double>(v));
  write_container(path, header, payload);
}

template <typename Scalar>
SdfNetwork<Scalar> SdfNetwork<Scalar>::load(const std::filesystem::path& path) {
  const Container c = read_container(path, "sdfnet");
  try {
    const NetworkConfig config = c.header.at("config").get<NetworkConfig>();
    Aabb unit{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
    SdfNetwork net(config, unit, 0);
    net.seed_ = c.header.at("seed").get<std::uint64_t>();
    const auto center = c.header.at("center").get<std::vector<double>>();
    require(center.size() == 3, ErrorCode::Io, "sdfnet: bad center");
    net.center_ = Vec3(center[0], center[1], center[2]).cast<Scalar>();
    net.scale_ = static_cast<Scalar>(c.header.at("scale").get<double>());
    net.d_max_ = static_cast<Scalar>(c.header.at("d_max").get<double>());
    const std::size_t nfreq = static_cast<std::size_t>(net.freq_.size());
    require(c.payload.size() == nfreq + static_cast<std::size_t>(net.params_.size()), ErrorCode::Io,
            "sdfnet: payload size does not match the architecture");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < net.freq_.rows(); ++r)
      for (Eigen::Index col = 0; col < 3; ++col) net.freq_(r, col) = static_cast<Scalar>(c.payload[k++]);
    net.params_.unflatten(std::vector<Scalar>(c.payload.begin(), c.payload.end()), k);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("sdfnet: malformed header: ") + e.what());
  }
}

template struct NetworkParams<double>;
template class SdfNetwork<double>;

}  // namespace sartomo
