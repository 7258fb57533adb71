#include "acsac/io.hpp"

#include "json.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace acsac {

namespace {

// all multi-byte fields are little-endian; this code assumes a LE host,
// which the build targets
void put_u32(std::string& out, uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  explicit Reader(const std::string& b) : buf(b) {}

  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw IoError(std::string("truncated file while reading ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  void bytes(void* dst, size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void done(const char* what) {
    if (pos != buf.size())
      throw IoError(std::string(what) + ": trailing bytes after payload");
  }
};

void check_magic(Reader& r, const char* magic) {
  std::string m = r.str(4, "magic");
  if (m != magic)
    throw IoError(std::string("bad magic: expected ") + magic + ", got '" + m + "'");
}

constexpr uint32_t kDatasetVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_dataset(const Dataset& ds) {
  nlohmann::json meta;
  meta["env_id"] = ds.meta.env_id;
  meta["obs_dim"] = ds.meta.obs_dim;
  meta["action_dim"] = ds.meta.action_dim;
  meta["num_episodes"] = int(ds.episodes.size());
  meta["seed"] = ds.meta.seed;
  meta["action_mean"] = ds.meta.action_mean;
  meta["action_std"] = ds.meta.action_std;
  meta["config_hash"] = ds.meta.config_hash;
  std::string mj = meta.dump();

  std::string out;
  out.reserve(64 + mj.size() + size_t(ds.transitions()) * 32);
  out += "ACSD";
  put_u32(out, kDatasetVersion);
  put_u32(out, uint32_t(mj.size()));
  out += mj;
  for (const Episode& ep : ds.episodes) {
    put_u32(out, uint32_t(ep.len));
    put_bytes(out, ep.states.data(), ep.states.size() * 4);
    put_bytes(out, ep.actions.data(), ep.actions.size() * 4);
    put_bytes(out, ep.rewards.data(), ep.rewards.size() * 4);
    put_bytes(out, ep.done.data(), ep.done.size());
  }
  return out;
}

Dataset decode_dataset(const std::string& bytes) {
  Reader r(bytes);
  check_magic(r, "ACSD");
  uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  uint32_t mlen = r.u32("metadata length");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(mlen, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad dataset metadata: ") + e.what());
  }
  Dataset ds;
  try {
    ds.meta.env_id = meta.at("env_id").get<std::string>();
    ds.meta.obs_dim = meta.at("obs_dim").get<int>();
    ds.meta.action_dim = meta.at("action_dim").get<int>();
    ds.meta.num_episodes = meta.at("num_episodes").get<int>();
    ds.meta.seed = meta.at("seed").get<uint64_t>();
    ds.meta.action_mean = meta.at("action_mean").get<std::vector<double>>();
    ds.meta.action_std = meta.at("action_std").get<std::vector<double>>();
    ds.meta.config_hash = meta.at("config_hash").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad dataset metadata: ") + e.what());
  }
  if (ds.meta.obs_dim < 1 || ds.meta.action_dim < 1 || ds.meta.num_episodes < 0)
    throw IoError("bad dataset metadata: nonpositive dimensions");
  for (int e = 0; e < ds.meta.num_episodes; e++) {
    Episode ep;
    ep.len = int(r.u32("episode length"));
    if (ep.len < 0) throw IoError("bad episode length");
    ep.states.resize(size_t(ep.len + 1) * ds.meta.obs_dim);
    ep.actions.resize(size_t(ep.len) * ds.meta.action_dim);
    ep.rewards.resize(size_t(ep.len));
    ep.done.resize(size_t(ep.len));
    r.bytes(ep.states.data(), ep.states.size() * 4, "states");
    r.bytes(ep.actions.data(), ep.actions.size() * 4, "actions");
    r.bytes(ep.rewards.data(), ep.rewards.size() * 4, "rewards");
    r.bytes(ep.done.data(), ep.done.size(), "done flags");
    ep.terminated = !ep.done.empty() && ep.done.back() != 0;
    ds.episodes.push_back(std::move(ep));
  }
  r.done("dataset");
  ds.recount();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  write_file_atomic(path, encode_dataset(ds));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

std::string encode_checkpoint(const std::string& header_json,
                              const std::vector<const Param<float>*>& blocks) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  nlohmann::json shapes = nlohmann::json::array();
  for (const Param<float>* p : blocks)
    shapes.push_back({{"name", p->name}, {"shape", p->shape}});
  header["blocks"] = shapes;
  std::string hj = header.dump();

  std::string out;
  out += "ACSC";
  put_u32(out, kCheckpointVersion);
  put_u32(out, uint32_t(hj.size()));
  out += hj;
  for (const Param<float>* p : blocks)
    put_bytes(out, p->value.data(), p->value.size() * 4);
  return out;
}

std::string checkpoint_header_json(const std::string& bytes) {
  Reader r(bytes);
  check_magic(r, "ACSC");
  uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  uint32_t hlen = r.u32("header length");
  std::string hj = r.str(hlen, "header");
  try {
    nlohmann::json::parse(hj);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  return hj;
}

std::string load_checkpoint_into(const std::string& bytes,
                                 const std::vector<Param<float>*>& blocks) {
  Reader r(bytes);
  check_magic(r, "ACSC");
  uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  uint32_t hlen = r.u32("header length");
  std::string hj = r.str(hlen, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hj);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto& shapes = header.at("blocks");
  if (shapes.size() != blocks.size())
    throw IoError("checkpoint has " + std::to_string(shapes.size()) +
                  " blocks, expected " + std::to_string(blocks.size()));
  for (size_t i = 0; i < blocks.size(); i++) {
    std::string name = shapes[i].at("name").get<std::string>();
    Shape shape = shapes[i].at("shape").get<Shape>();
    if (name != blocks[i]->name || shape != blocks[i]->shape)
      throw IoError("checkpoint block " + std::to_string(i) + " is '" + name + "' " +
                    shape_str(shape) + ", expected '" + blocks[i]->name + "' " +
                    shape_str(blocks[i]->shape));
    r.bytes(blocks[i]->value.data(), blocks[i]->value.size() * 4, name.c_str());
  }
  r.done("checkpoint");
  return hj;
}

void save_checkpoint(const std::string& path, const std::string& header_json,
                     const std::vector<const Param<float>*>& blocks) {
  write_file_atomic(path, encode_checkpoint(header_json, blocks));
}

std::string load_checkpoint(const std::string& path,
                            const std::vector<Param<float>*>& blocks) {
  return load_checkpoint_into(read_file(path), blocks);
}

}  // namespace acsac
