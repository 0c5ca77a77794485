#include "gmdyn/kernel_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gmdyn/errors.hpp"

namespace gmdyn {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'M', 'D', 'Y', 'N', 'K', '0', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  template <typename U>
  void uint(U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(U));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw IoError("write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError(path_.string() + ": truncated kernel file");
    }
  }
  template <typename U>
  U uint() {
    unsigned char buf[sizeof(U)];
    bytes(reinterpret_cast<char*>(buf), sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

KernelFileMeta KernelFileMeta::from_run(const MixtureSpec& spec, const RunParams& params,
                                        DmftMaskMode mode) {
  KernelFileMeta m;
  m.dt = params.eta;
  m.alpha = params.alpha;
  m.delta = spec.delta;
  m.lambda = params.lambda;
  m.b = params.b;
  m.tau = params.tau;
  m.R = params.R;
  m.door_onset = spec.door_onset;
  m.rho = spec.rho;
  m.kind = spec.kind;
  m.mask_mode = mode;
  return m;
}

void save_kernels(const std::filesystem::path& path, const KernelCheckpoint& cp) {
  const KernelSet& k = cp.kernels;
  const std::size_t n = k.size();
  if (static_cast<std::size_t>(k.noise.rows()) != n || static_cast<std::size_t>(k.memory.rows()) != n ||
      static_cast<std::size_t>(k.lambda_hat.size()) != n || static_cast<std::size_t>(k.mu.size()) != n) {
    throw std::invalid_argument("kernel set has inconsistent sizes");
  }
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kKernelFileVersion);
  w.uint<std::uint32_t>(0);
  w.uint<std::uint64_t>(n);
  const KernelFileMeta& m = cp.meta;
  for (double v : {m.dt, m.alpha, m.delta, m.lambda, m.b, m.tau, m.R, m.door_onset, m.rho}) w.f64(v);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.kind));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.mask_mode));
  for (const Eigen::VectorXd* v : {&k.lambda_hat, &k.mu, &k.m}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) w.f64((*v)(i));
  }
  for (const RowMatrix* a : {&k.noise, &k.memory}) {
    for (Eigen::Index i = 0; i < a->size(); ++i) w.f64(a->data()[i]);
  }
  w.finish(path);
}

KernelCheckpoint load_kernels(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw IoError(path.string() + ": not a kernel file (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kKernelFileVersion) {
    throw IoError(path.string() + ": unsupported kernel file version " + std::to_string(version));
  }
  r.uint<std::uint32_t>();
  const auto n64 = r.uint<std::uint64_t>();
  if (n64 == 0 || n64 > (1u << 16)) {
    throw IoError(path.string() + ": implausible grid size " + std::to_string(n64));
  }
  const auto n = static_cast<std::size_t>(n64);

  KernelCheckpoint cp;
  KernelFileMeta& m = cp.meta;
  for (double* v : {&m.dt, &m.alpha, &m.delta, &m.lambda, &m.b, &m.tau, &m.R, &m.door_onset, &m.rho}) {
    *v = r.f64();
  }
  const auto kind = r.uint<std::uint32_t>();
  const auto mode = r.uint<std::uint32_t>();
  if (kind > 1 || mode > 2) throw IoError(path.string() + ": bad enum field in header");
  m.kind = static_cast<ClusterKind>(kind);
  m.mask_mode = static_cast<DmftMaskMode>(mode);

  cp.kernels = KernelSet::zeros(n);
  KernelSet& k = cp.kernels;
  for (Eigen::VectorXd* v : {&k.lambda_hat, &k.mu, &k.m}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = r.f64();
  }
  for (RowMatrix* a : {&k.noise, &k.memory}) {
    for (Eigen::Index i = 0; i < a->size(); ++i) a->data()[i] = r.f64();
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes after kernel data");
  return cp;
}

void save_kernels_csv(const std::filesystem::path& path, const KernelSet& k, double dt) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::fprintf(f, "i,j,t,t_prime,noise,memory\n");
  const auto n = static_cast<Eigen::Index>(k.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      std::fprintf(f, "%td,%td,%.17g,%.17g,%.17g,%.17g\n", static_cast<std::ptrdiff_t>(i),
                   static_cast<std::ptrdiff_t>(j), static_cast<double>(i) * dt,
                   static_cast<double>(j) * dt, k.noise(i, j), k.memory(i, j));
    }
  }
  const bool ok = std::ferror(f) == 0;
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed for " + path.string());
}

}  // namespace gmdyn
