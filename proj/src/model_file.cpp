#include "tpm/model_file.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include <fmt/format.h>
#include <zlib.h>

#include "tpm/error.hpp"

namespace tpm {
namespace {

using nlohmann::ordered_json;

constexpr std::array<char, 8> kMagic = {'T', 'P', 'M', 'M', 'O', 'D', 'E', 'L'};
constexpr std::int64_t kNone = -1;

Error format_error(const std::string& what) {
  return Error(ErrorKind::kModelFormat, "model file: " + what);
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos > bytes.size() || bytes.size() - pos < sizeof(T)) {
    throw format_error("truncated");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i]))
             << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

std::uint32_t checksum(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large inputs in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - pos);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos),
                static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

// Floating data travels outside the JSON header so values stay bit-exact.
class ArrayWriter {
 public:
  void put(const std::string& name, std::span<const double> values) {
    names_.push_back({name, values.size()});
    payload_.insert(payload_.end(), values.begin(), values.end());
  }
  const ordered_json& names() const { return names_; }
  const std::vector<double>& payload() const { return payload_; }

 private:
  ordered_json names_ = ordered_json::array();
  std::vector<double> payload_;
};

class ArrayReader {
 public:
  ArrayReader(const ordered_json& names, std::vector<double> payload)
      : payload_(std::move(payload)) {
    std::size_t offset = 0;
    for (const auto& entry : names) {
      const auto name = entry.at(0).get<std::string>();
      const auto size = entry.at(1).get<std::size_t>();
      if (size > payload_.size() - offset) {
        throw format_error(fmt::format("array '{}' overruns the payload", name));
      }
      if (!index_.emplace(name, std::pair{offset, size}).second) {
        throw format_error(fmt::format("duplicate array '{}'", name));
      }
      offset += size;
    }
    if (offset != payload_.size()) {
      throw format_error("payload size does not match the declared arrays");
    }
  }

  std::vector<double> get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw format_error(fmt::format("missing array '{}'", name));
    }
    const auto [offset, size] = it->second;
    return {payload_.begin() + static_cast<std::ptrdiff_t>(offset),
            payload_.begin() + static_cast<std::ptrdiff_t>(offset + size)};
  }

  double scalar(const std::string& name) const {
    const auto values = get(name);
    if (values.size() != 1) {
      throw format_error(fmt::format("array '{}' must hold one value", name));
    }
    return values[0];
  }

 private:
  std::vector<double> payload_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

std::int64_t opt_index(const std::optional<std::size_t>& v) {
  return v ? static_cast<std::int64_t>(*v) : kNone;
}

ordered_json encode_tree(const DecompositionTree& tree,
                         const std::string& prefix, ArrayWriter& arrays) {
  ordered_json nodes = ordered_json::array();
  for (const TreeNode& node : tree.nodes()) {
    const std::int64_t left =
        node.children ? static_cast<std::int64_t>(node.children->first) : kNone;
    const std::int64_t right =
        node.children ? static_cast<std::int64_t>(node.children->second)
                      : kNone;
    nodes.push_back({node.start, node.end, left, right, opt_index(node.head)});
  }
  arrays.put(prefix + "boundaries", tree.scale().boundaries());
  arrays.put(prefix + "leaf_values", tree.leaf_values());
  ordered_json j;
  j["kind"] = to_string(tree.kind());
  j["root"] = tree.root();
  j["nodes"] = std::move(nodes);
  return j;
}

DecompositionTree decode_tree(const ordered_json& j, const std::string& prefix,
                              const ArrayReader& arrays) {
  OrdinalScale scale(arrays.get(prefix + "boundaries"));
  std::vector<TreeNode> nodes;
  for (const auto& record : j.at("nodes")) {
    if (!record.is_array() || record.size() != 5) {
      throw format_error("tree node records need 5 fields");
    }
    TreeNode node;
    node.start = record[0].get<std::size_t>();
    node.end = record[1].get<std::size_t>();
    const auto left = record[2].get<std::int64_t>();
    const auto right = record[3].get<std::int64_t>();
    const auto head = record[4].get<std::int64_t>();
    if (left >= 0 && right >= 0) {
      node.children = std::pair{static_cast<std::size_t>(left),
                                static_cast<std::size_t>(right)};
    }
    if (head >= 0) node.head = static_cast<std::size_t>(head);
    if (node.end > node.start && node.end - node.start == 1 &&
        node.end <= scale.num_intervals()) {
      node.leaf_midpoint = scale.midpoint(node.start);
    }
    nodes.push_back(node);
  }
  DecompositionTree tree(std::move(scale),
                         tree_kind_from_string(j.at("kind").get<std::string>()),
                         std::move(nodes), j.at("root").get<std::size_t>());
  tree.set_leaf_values(arrays.get(prefix + "leaf_values"));
  return tree;
}

ordered_json encode_net(const MultiHeadNet& net, const std::string& prefix,
                        ArrayWriter& arrays) {
  const NetConfig& c = net.config();
  arrays.put(prefix + "params", net.params());
  ordered_json j;
  j["input_dim"] = c.input_dim;
  j["hidden_dims"] = c.hidden_dims;
  j["num_heads"] = c.num_heads;
  j["seed"] = c.seed;
  j["activation"] = to_string(c.activation);
  return j;
}

MultiHeadNet decode_net(const ordered_json& j, const std::string& prefix,
                        const ArrayReader& arrays) {
  NetConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  return MultiHeadNet(c, arrays.get(prefix + "params"));
}

void encode_partition(const ConfounderPartition& p, ArrayWriter& arrays) {
  arrays.put("partition.boundaries", p.boundaries());
  arrays.put("partition.prior", p.prior());
}

ConfounderPartition decode_partition(const ArrayReader& arrays) {
  return ConfounderPartition(arrays.get("partition.boundaries"),
                             arrays.get("partition.prior"));
}

struct Encoder {
  ArrayWriter& arrays;

  ordered_json operator()(const TpmModel& m) const {
    ordered_json j;
    j["tree"] = encode_tree(m.tree, "tree.", arrays);
    j["net"] = encode_net(m.net, "net.", arrays);
    return j;
  }

  ordered_json operator()(const DeconfoundedPredictor& p) const {
    const DeconfoundedModel& m = p.model;
    encode_partition(m.partition(), arrays);
    ordered_json j;
    j["conditioning"] = to_string(m.conditioning());
    j["predict_mode"] = to_string(p.mode);
    ordered_json trees = ordered_json::array();
    for (std::size_t g = 0; g < m.trees().size(); ++g) {
      trees.push_back(encode_tree(m.trees()[g], fmt::format("tree{}.", g), arrays));
    }
    ordered_json nets = ordered_json::array();
    for (std::size_t g = 0; g < m.nets().size(); ++g) {
      nets.push_back(encode_net(m.nets()[g], fmt::format("net{}.", g), arrays));
    }
    j["trees"] = std::move(trees);
    j["nets"] = std::move(nets);
    return j;
  }

  ordered_json operator()(const WlrModel& m) const {
    const double threshold = m.threshold;
    arrays.put("wlr.threshold", std::span<const double>(&threshold, 1));
    ordered_json j;
    j["net"] = encode_net(m.net, "net.", arrays);
    return j;
  }

  ordered_json operator()(const D2qModel& m) const {
    encode_partition(m.partition, arrays);
    for (std::size_t g = 0; g < m.group_targets.size(); ++g) {
      arrays.put(fmt::format("d2q.targets{}", g), m.group_targets[g]);
    }
    ordered_json j;
    j["num_groups"] = m.group_targets.size();
    j["net"] = encode_net(m.net, "net.", arrays);
    return j;
  }

  ordered_json operator()(const OrModel& m) const {
    arrays.put("or.scale", m.scale.boundaries());
    if (m.partition) encode_partition(*m.partition, arrays);
    ordered_json j;
    j["grouped"] = m.partition.has_value();
    j["net"] = encode_net(m.net, "net.", arrays);
    return j;
  }
};

AnyModel decode_body(Method method, const ordered_json& j,
                     const ArrayReader& arrays) {
  switch (method) {
    case Method::kTpm:
      return TpmModel{decode_tree(j.at("tree"), "tree.", arrays),
                      decode_net(j.at("net"), "net.", arrays)};
    case Method::kTpmDeconfounded: {
      std::vector<DecompositionTree> trees;
      const auto& tree_json = j.at("trees");
      for (std::size_t g = 0; g < tree_json.size(); ++g) {
        trees.push_back(decode_tree(tree_json[g], fmt::format("tree{}.", g), arrays));
      }
      std::vector<MultiHeadNet> nets;
      const auto& net_json = j.at("nets");
      for (std::size_t g = 0; g < net_json.size(); ++g) {
        nets.push_back(decode_net(net_json[g], fmt::format("net{}.", g), arrays));
      }
      DeconfoundedModel model(
          decode_partition(arrays),
          conditioning_from_string(j.at("conditioning").get<std::string>()),
          std::move(trees), std::move(nets));
      return DeconfoundedPredictor{
          std::move(model),
          predict_mode_from_string(j.at("predict_mode").get<std::string>())};
    }
    case Method::kWlr:
      return WlrModel{decode_net(j.at("net"), "net.", arrays),
                      arrays.scalar("wlr.threshold")};
    case Method::kD2q: {
      ConfounderPartition partition = decode_partition(arrays);
      const auto groups = j.at("num_groups").get<std::size_t>();
      if (groups != partition.num_groups()) {
        throw format_error("D2Q group count does not match its partition");
      }
      std::vector<std::vector<double>> targets;
      for (std::size_t g = 0; g < groups; ++g) {
        targets.push_back(arrays.get(fmt::format("d2q.targets{}", g)));
        if (targets.back().empty()) {
          throw format_error(fmt::format("D2Q group {} has no targets", g));
        }
      }
      MultiHeadNet net = decode_net(j.at("net"), "net.", arrays);
      if (net.num_heads() != groups) {
        throw format_error("D2Q net head count does not match its groups");
      }
      return D2qModel{std::move(partition), std::move(net), std::move(targets)};
    }
    case Method::kOr: {
      OrdinalScale scale(arrays.get("or.scale"));
      std::optional<ConfounderPartition> partition;
      if (j.at("grouped").get<bool>()) partition = decode_partition(arrays);
      MultiHeadNet net = decode_net(j.at("net"), "net.", arrays);
      if (net.num_heads() != scale.num_intervals()) {
        throw format_error("ordinal net head count does not match its scale");
      }
      return OrModel{std::move(scale), std::move(net), std::move(partition)};
    }
  }
  throw format_error("unknown method");
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kTpm: return "tpm";
    case Method::kTpmDeconfounded: return "tpm-deconfounded";
    case Method::kWlr: return "wlr";
    case Method::kD2q: return "d2q";
    case Method::kOr: return "or";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::kTpm, Method::kTpmDeconfounded, Method::kWlr,
                   Method::kD2q, Method::kOr}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown method '{}' (expected tpm, "
                          "tpm-deconfounded, wlr, d2q or or)",
                          name));
}

Method method_of(const AnyModel& model) {
  return static_cast<Method>(model.index());
}

std::string encode_model(const ModelFile& file) {
  ArrayWriter arrays;
  ordered_json header;
  header["method"] = to_string(file.method());
  header["config"] = file.config;
  header["model"] = std::visit(Encoder{arrays}, file.model);
  header["arrays"] = arrays.names();
  const std::string header_text = header.dump();

  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  put_le<std::uint64_t>(out, arrays.payload().size());
  for (double v : arrays.payload()) {
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint32_t>(out, checksum(out));
  return out;
}

ModelFile decode_model(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw format_error("not a model file (bad magic)");
  }
  std::size_t pos = kMagic.size();
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kModelFormatVersion) {
    throw format_error(fmt::format("unsupported format version {} (this "
                                   "build reads version {})",
                                   version, kModelFormatVersion));
  }
  if (bytes.size() < pos + 4) throw format_error("truncated");
  std::size_t crc_pos = bytes.size() - 4;
  const auto stored = get_le<std::uint32_t>(bytes, crc_pos);
  if (stored != checksum(bytes.substr(0, bytes.size() - 4))) {
    throw format_error("checksum mismatch");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);

  const auto header_len = get_le<std::uint64_t>(body, pos);
  if (header_len > body.size() - pos) throw format_error("truncated header");
  const std::string_view header_text = body.substr(pos, header_len);
  pos += header_len;
  const auto count = get_le<std::uint64_t>(body, pos);
  if (count > (body.size() - pos) / 8 || (body.size() - pos) != count * 8) {
    throw format_error("payload length mismatch");
  }
  std::vector<double> payload(count);
  for (auto& v : payload) {
    v = std::bit_cast<double>(get_le<std::uint64_t>(body, pos));
  }

  try {
    const ordered_json header = ordered_json::parse(header_text);
    const Method method = method_from_string(header.at("method").get<std::string>());
    ArrayReader arrays(header.at("arrays"), std::move(payload));
    ModelFile file{decode_body(method, header.at("model"), arrays),
                   header.value("config", ordered_json::object())};
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(fmt::format("malformed header: {}", e.what()));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kModelFormat) throw;
    throw format_error(e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelFile& file) {
  const std::string bytes = encode_model(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("cannot write model file {}", path.string()));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("failed writing model file {}", path.string()));
  }
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("cannot open model file {}", path.string()));
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace tpm
