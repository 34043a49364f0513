#include "obsw/paths.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "obsw/rng.hpp"
#include "obsw/threading.hpp"

namespace obsw {

TimeGrid TimeGrid::uniform(double t_cap, int n_steps) {
  if (!(t_cap > 0.0)) raise(errc::parameter, "t_cap must be positive");
  if (n_steps < 1) raise(errc::parameter, "n_steps must be at least 1");
  return {t_cap, n_steps};
}

namespace {

[[noreturn]] void eval_abort(const char* what, int mode, int step, std::size_t path,
                             const std::string& detail) {
  raise(errc::evaluation, std::string(what) + " failed at (mode " + std::to_string(mode + 1) +
                              ", step " + std::to_string(step) + ", path " +
                              std::to_string(path) + "): " + detail);
}

}  // namespace

PathBundle simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, std::size_t n_paths,
                            std::uint64_t seed) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  if (n_paths < 1) raise(errc::parameter, "n_paths must be at least 1");

  const int d = spec.num_modes();
  const int n = grid.n_steps;
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);

  PathBundle bundle;
  bundle.grid = grid;
  bundle.n_modes = d;
  bundle.n_paths = n_paths;
  bundle.seed = seed;
  bundle.dw.resize(static_cast<std::size_t>(n) * n_paths);
  bundle.x.resize(static_cast<std::size_t>(d) * (n + 1) * n_paths);
  bundle.kappa.assign(n_paths, static_cast<std::int32_t>(n));
  bundle.dg.assign(static_cast<std::size_t>(d) * n * n_paths, 0.0);

  const bool has_exit = spec.horizon.has_exit();
  const int i0 = spec.initial_mode;

  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      // Brownian increments first: identical across modes by construction.
      for (int k = 0; k < n; ++k)
        bundle.dw[static_cast<std::size_t>(k) * n_paths + p] =
            sqrt_dt * rng::normal(seed, p, static_cast<std::uint32_t>(k), rng::kBrownian);

      std::int32_t stop = has_exit && !spec.horizon.inside(spec.x0) ? 0 : n;
      for (int i = 0; i < d; ++i) bundle.x[bundle.state_index(i, 0, p)] = spec.x0;

      for (int k = 0; k < n; ++k) {
        const double t = grid.time(k);
        const double dwk = bundle.dw[static_cast<std::size_t>(k) * n_paths + p];
        const bool alive = k < stop;
        for (int i = 0; i < d; ++i) {
          const double xk = bundle.x[bundle.state_index(i, k, p)];
          double xnext = xk;
          if (alive) {
            double bv, sv;
            try {
              bv = spec.sim_drift(i).eval_tx(t, xk);
              sv = spec.diffusion(t, xk, i);
            } catch (const EvalError& e) {
              eval_abort("coefficient evaluation", i, k, p, e.what());
            }
            xnext = xk + bv * dt + sv * dwk;
            if (std::isnan(xnext)) eval_abort("state update", i, k, p, "produced NaN");
            // log-weight increment under the declared drift
            double bdecl;
            try {
              bdecl = spec.drift(t, xk, i);
            } catch (const EvalError& e) {
              eval_abort("drift evaluation", i, k, p, e.what());
            }
            bundle.dg[(static_cast<std::size_t>(i) * n + k) * n_paths + p] =
                bdecl * dwk - 0.5 * bdecl * bdecl * dt;
          }
          bundle.x[bundle.state_index(i, k + 1, p)] = xnext;
        }
        if (alive && has_exit &&
            !spec.horizon.inside(bundle.x[bundle.state_index(i0, k + 1, p)])) {
          stop = k + 1;
        }
      }
      bundle.kappa[p] = stop;
    }
  });
  return bundle;
}

std::vector<double> girsanov_logweight(const PathBundle& bundle, std::span<const int> mode_path,
                                       const ProblemSpec& spec) {
  const int n = bundle.grid.n_steps;
  if (static_cast<int>(mode_path.size()) < n)
    raise(errc::structural, "mode_path must cover every step of the grid");
  for (int k = 0; k < n; ++k)
    if (mode_path[k] < 0 || mode_path[k] >= bundle.n_modes)
      raise(errc::structural, "mode_path entry outside the mode set");
  (void)spec;

  std::vector<double> logw(bundle.n_paths, 0.0);
  parallel_for(bundle.n_paths, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int stop = bundle.kappa[p];
      double acc = 0.0;
      for (int k = 0; k < stop; ++k) acc += bundle.girsanov_increment(mode_path[k], k, p);
      logw[p] = acc;
    }
  });
  return logw;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::ifstream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

double get_f64(std::ifstream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr std::uint32_t kPathMagic = 0x4F425357u;  // "OBSW"
constexpr std::uint32_t kPathVersion = 1;

}  // namespace

void dump_paths(const PathBundle& bundle, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(errc::io, "cannot open " + file.string() + " for writing");
  put_u32(out, kPathMagic);
  put_u32(out, kPathVersion);
  put_u64(out, bundle.seed);
  put_u32(out, static_cast<std::uint32_t>(bundle.n_modes));
  put_u32(out, static_cast<std::uint32_t>(bundle.grid.n_steps));
  put_u64(out, bundle.n_paths);
  put_f64(out, bundle.grid.t_cap);
  for (double v : bundle.dw) put_f64(out, v);
  for (double v : bundle.x) put_f64(out, v);
  for (std::int32_t v : bundle.kappa) put_u32(out, static_cast<std::uint32_t>(v));
  for (double v : bundle.dg) put_f64(out, v);
  if (!out) raise(errc::io, "write to " + file.string() + " failed");
}

PathBundle load_paths(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) raise(errc::io, "cannot open " + file.string());
  if (get_u32(in) != kPathMagic) raise(errc::io, file.string() + " is not a path dump");
  if (get_u32(in) != kPathVersion) raise(errc::io, file.string() + ": unsupported version");
  PathBundle bundle;
  bundle.seed = get_u64(in);
  bundle.n_modes = static_cast<int>(get_u32(in));
  bundle.grid.n_steps = static_cast<int>(get_u32(in));
  bundle.n_paths = get_u64(in);
  bundle.grid.t_cap = get_f64(in);
  const std::size_t np = bundle.n_paths;
  const int n = bundle.grid.n_steps;
  const int d = bundle.n_modes;
  bundle.dw.resize(static_cast<std::size_t>(n) * np);
  bundle.x.resize(static_cast<std::size_t>(d) * (n + 1) * np);
  bundle.kappa.resize(np);
  bundle.dg.resize(static_cast<std::size_t>(d) * n * np);
  for (double& v : bundle.dw) v = get_f64(in);
  for (double& v : bundle.x) v = get_f64(in);
  for (std::int32_t& v : bundle.kappa) v = static_cast<std::int32_t>(get_u32(in));
  for (double& v : bundle.dg) v = get_f64(in);
  if (!in) raise(errc::io, file.string() + ": truncated path dump");
  return bundle;
}

}  // namespace obsw
