#include "mf/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace mf {

template <typename T>
void adam_step(const ParamList<T>& params, T lr, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (!p->value.has_grad())
      throw StateError(str_cat("adam_step: parameter '", p->name,
                               "' has no gradient"));
    const std::vector<T>& g = p->value.grad();
    std::vector<T>& w = p->value.values();
    const size_t n = w.size();
    if (p->m.empty()) {
      p->m.assign(n, T(0));
      p->v.assign(n, T(0));
    }
    ++p->step;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(p->step));
    for (size_t i = 0; i < n; ++i) {
      p->m[i] = static_cast<T>(b1 * p->m[i] + (1.0 - b1) * g[i]);
      p->v[i] = static_cast<T>(b2 * p->v[i] + (1.0 - b2) * g[i] * g[i]);
      const double mhat = p->m[i] / c1;
      const double vhat = p->v[i] / c2;
      w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& p : params) p->value.zero_grad();
}

template <typename T>
void set_requires_grad(const ParamList<T>& params, bool rg) {
  for (const auto& p : params) p->value.set_requires_grad(rg);
}

namespace {

constexpr uint32_t kMagic = 0x4b43464d;  // "MFCK"
constexpr uint32_t kVersion = 1;

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is, const char* what) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw ParseError(str_cat("checkpoint: truncated reading ", what));
  return v;
}

template <typename T>
void write_buf(std::ostream& os, const std::vector<T>& buf) {
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(T)));
}

template <typename T>
void read_buf(std::istream& is, std::vector<T>& buf, const char* what) {
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(T)));
  if (!is) throw ParseError(str_cat("checkpoint: truncated reading ", what));
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params,
                     int64_t global_step) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(str_cat("cannot open '", path, "' for writing"));
  write_pod(os, kMagic);
  write_pod(os, kVersion);
  write_pod(os, global_step);
  write_pod(os, static_cast<uint64_t>(params.size()));
  for (const auto& p : params) {
    write_pod(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& s = p->value.shape();
    write_pod(os, static_cast<uint32_t>(s.size()));
    for (size_t d : s) write_pod(os, static_cast<uint64_t>(d));
    write_pod(os, static_cast<uint8_t>(sizeof(T)));
    write_pod(os, p->step);
    write_buf(os, p->value.values());
    if (p->m.empty()) {
      std::vector<T> zeros(p->value.numel(), T(0));
      write_buf(os, zeros);
      write_buf(os, zeros);
    } else {
      write_buf(os, p->m);
      write_buf(os, p->v);
    }
  }
  if (!os) throw IoError(str_cat("write failed for '", path, "'"));
}

template <typename T>
int64_t load_checkpoint(const std::string& path, const ParamList<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(str_cat("cannot open '", path, "'"));
  if (read_pod<uint32_t>(is, "magic") != kMagic)
    throw ParseError(str_cat("'", path, "' is not a checkpoint file"));
  const uint32_t version = read_pod<uint32_t>(is, "version");
  if (version != kVersion)
    throw LoadError(str_cat("checkpoint format version ", version,
                            " unsupported (expected ", kVersion, ")"));
  const int64_t global_step = read_pod<int64_t>(is, "global step");
  const uint64_t count = read_pod<uint64_t>(is, "param count");
  if (count != params.size())
    throw LoadError(str_cat("checkpoint has ", count, " parameters, model has ",
                            params.size()));

  std::map<std::string, ParamPtr<T>> by_name;
  for (const auto& p : params) by_name[p->name] = p;

  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint: truncated reading name");
    const uint32_t rank = read_pod<uint32_t>(is, "rank");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<size_t>(read_pod<uint64_t>(is, "extent"));
    const uint8_t scalar = read_pod<uint8_t>(is, "scalar size");
    if (scalar != sizeof(T))
      throw LoadError(str_cat("checkpoint parameter '", name, "' stores ",
                              int(scalar), "-byte scalars, model uses ",
                              sizeof(T)));
    const int64_t step = read_pod<int64_t>(is, "adam step");

    auto it = by_name.find(name);
    if (it == by_name.end())
      throw LoadError(str_cat("checkpoint parameter '", name,
                              "' not present in model"));
    ParamPtr<T> p = it->second;
    if (p->value.shape() != shape)
      throw LoadError(str_cat("shape mismatch for '", name, "': checkpoint ",
                              shape_str(shape), " vs model ",
                              shape_str(p->value.shape())));
    p->step = step;
    read_buf(is, p->value.values(), name.c_str());
    p->m.assign(p->value.numel(), T(0));
    p->v.assign(p->value.numel(), T(0));
    read_buf(is, p->m, "adam m");
    read_buf(is, p->v, "adam v");
  }
  return global_step;
}

#define MF_INSTANTIATE_OPTIM(T)                                             \
  template void adam_step<T>(const ParamList<T>&, T, const AdamConfig&);    \
  template void zero_grads<T>(const ParamList<T>&);                         \
  template void set_requires_grad<T>(const ParamList<T>&, bool);            \
  template void save_checkpoint<T>(const std::string&, const ParamList<T>&, \
                                   int64_t);                                \
  template int64_t load_checkpoint<T>(const std::string&, const ParamList<T>&);

MF_INSTANTIATE_OPTIM(float)
MF_INSTANTIATE_OPTIM(double)

}  // namespace mf
