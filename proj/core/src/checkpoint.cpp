#include "diffopt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace diffopt {

namespace {

constexpr std::string_view kMagic = "DOPTCKPT";

class Writer {
 public:
  template <class T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    static_assert(sizeof(T) == sizeof(U));
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void put_raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view get_raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <class T>
void put_tensor(Writer& w, const std::string& name, const T& tensor) {
  w.put_string(name);
  const bool is_vector = T::ColsAtCompileTime == 1;
  w.put(static_cast<std::uint32_t>(is_vector ? 1 : 2));
  w.put(static_cast<std::uint64_t>(tensor.rows()));
  if (!is_vector) w.put(static_cast<std::uint64_t>(tensor.cols()));
  for (Index r = 0; r < tensor.rows(); ++r) {
    for (Index c = 0; c < tensor.cols(); ++c) w.put(tensor(r, c));
  }
}

template <class T>
void get_tensor(Reader& r, const std::string& expected_name, T& tensor) {
  const std::string name = r.get_string();
  if (name != expected_name) throw CheckpointError("expected tensor '" + expected_name + "', found '" + name + "'");
  const bool is_vector = T::ColsAtCompileTime == 1;
  const auto rank = r.get<std::uint32_t>();
  if (rank != (is_vector ? 1u : 2u)) throw CheckpointError("tensor '" + name + "' has wrong rank");
  const auto rows = r.get<std::uint64_t>();
  const std::uint64_t cols = is_vector ? 1 : r.get<std::uint64_t>();
  if (rows != static_cast<std::uint64_t>(tensor.rows()) || cols != static_cast<std::uint64_t>(tensor.cols())) {
    throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                          ", model expects " + std::to_string(tensor.rows()) + "x" + std::to_string(tensor.cols()));
  }
  for (Index i = 0; i < tensor.rows(); ++i) {
    for (Index j = 0; j < tensor.cols(); ++j) tensor(i, j) = r.get<double>();
  }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const TrainerState& st = ckpt.state;
  Writer w;
  w.put_raw(kMagic);
  w.put(kCheckpointVersion);
  w.put(st.step);
  w.put(st.adam.step);
  w.put(st.adam.config.lr);
  w.put(st.adam.config.beta1);
  w.put(st.adam.config.beta2);
  w.put(st.adam.config.epsilon);
  w.put(st.adam.config.weight_decay);
  w.put_string(to_text(ckpt.config));
  w.put_string(st.rng.state());

  // Adam moments share the flattened parameter layout; split them per tensor.
  NoisePredictorParams m = st.params;
  NoisePredictorParams v = st.params;
  m.assign(st.adam.m);
  v.assign(st.adam.v);
  std::uint32_t count = 0;
  st.params.for_each_tensor([&](const std::string&, const auto&) { count += 3; });
  w.put(count);
  st.params.for_each_tensor([&](const std::string& name, const auto& t) { put_tensor(w, "params/" + name, t); });
  m.for_each_tensor([&](const std::string& name, const auto& t) { put_tensor(w, "adam.m/" + name, t); });
  v.for_each_tensor([&](const std::string& name, const auto& t) { put_tensor(w, "adam.v/" + name, t); });
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.get_raw(kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  TrainerState& st = ckpt.state;
  st.step = r.get<std::int64_t>();
  const auto adam_step = r.get<std::int64_t>();
  AdamConfig ac;
  ac.lr = r.get<double>();
  ac.beta1 = r.get<double>();
  ac.beta2 = r.get<double>();
  ac.epsilon = r.get<double>();
  ac.weight_decay = r.get<double>();
  try {
    ckpt.config = parse_config(r.get_string());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("embedded config invalid: ") + e.what());
  }
  try {
    st.rng.restore(r.get_string());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }

  st.params = NoisePredictorParams::zeros(ckpt.config.world.dim);
  NoisePredictorParams m = st.params;
  NoisePredictorParams v = st.params;
  std::uint32_t expected = 0;
  st.params.for_each_tensor([&](const std::string&, const auto&) { expected += 3; });
  if (r.get<std::uint32_t>() != expected) throw CheckpointError("unexpected tensor count");
  st.params.for_each_tensor([&](const std::string& name, auto& t) { get_tensor(r, "params/" + name, t); });
  m.for_each_tensor([&](const std::string& name, auto& t) { get_tensor(r, "adam.m/" + name, t); });
  v.for_each_tensor([&](const std::string& name, auto& t) { get_tensor(r, "adam.v/" + name, t); });
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");

  st.adam = AdamState(st.params.parameter_count(), ac);
  st.adam.step = adam_step;
  st.adam.m = m.flatten();
  st.adam.v = v.flatten();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace diffopt
