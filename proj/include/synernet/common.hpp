#pragma once

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace synernet {

using Vec = std::vector<double>;

// Row-major dense matrix. Small enough everywhere that hand-rolled loops win
// over pulling in a BLAS dependency.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    size_t size() const { return data.size(); }
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
    invalid_argument,
    io,
    checksum_mismatch,
    version_mismatch,
    routing,
    protocol,
    numeric,
    dimension_mismatch,
    frozen_violation,
    degenerate,
};

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const { return code_; }

  private:
    Errc code_;
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_argument:  return "invalid_argument";
        case Errc::io:                return "io";
        case Errc::checksum_mismatch: return "checksum_mismatch";
        case Errc::version_mismatch:  return "version_mismatch";
        case Errc::routing:           return "routing";
        case Errc::protocol:          return "protocol";
        case Errc::numeric:           return "numeric";
        case Errc::dimension_mismatch:return "dimension_mismatch";
        case Errc::frozen_violation:  return "frozen_violation";
        case Errc::degenerate:        return "degenerate";
    }
    return "unknown";
}

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
    throw Error(code, std::string(errc_name(code)) + ": " + msg);
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from (seed, tag).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    uint64_t s = seed ^ (0x632be59bd9b4e019ULL + tag * 0x9e3779b97f4a7c15ULL);
    splitmix64(s);
    return splitmix64(s);
}

// mt19937_64 is bit-exact per the standard; the gaussian transform is written
// out explicitly so sequences do not depend on libstdc++'s distribution
// implementations.
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed) : gen(seed) {}

    uint64_t u64() { return gen(); }

    // uniform in [0, 1)
    double uniform() { return double(gen() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform_pos() { return 1.0 - uniform(); }

    double gaussian() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    size_t index(size_t n) { return size_t(u64() % n); }
};

// ---------------------------------------------------------------------------
// Small linear algebra helpers
// ---------------------------------------------------------------------------

inline Vec matvec(const Mat& m, const Vec& v) {
    if (v.size() != m.cols) fail(Errc::dimension_mismatch, "matvec: expected " + std::to_string(m.cols) + ", got " + std::to_string(v.size()));
    Vec out(m.rows, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = &m.data[r * m.cols];
        for (size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

// mᵀ·v
inline Vec matvec_t(const Mat& m, const Vec& v) {
    if (v.size() != m.rows) fail(Errc::dimension_mismatch, "matvec_t: expected " + std::to_string(m.rows) + ", got " + std::to_string(v.size()));
    Vec out(m.cols, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = &m.data[r * m.cols];
        for (size_t c = 0; c < m.cols; ++c) out[c] += row[c] * v[r];
    }
    return out;
}

// grad += a·bᵀ
inline void add_outer(Mat& grad, const Vec& a, const Vec& b) {
    for (size_t r = 0; r < grad.rows; ++r)
        for (size_t c = 0; c < grad.cols; ++c)
            grad.data[r * grad.cols + c] += a[r] * b[c];
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline Vec normalized(const Vec& v) {
    const double n = norm2(v);
    if (n == 0.0) fail(Errc::degenerate, "cannot normalize zero vector");
    Vec out(v);
    for (double& x : out) x /= n;
    return out;
}

inline void axpy(Vec& y, double a, const Vec& x) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline Vec mean_of(const std::vector<Vec>& vs) {
    Vec out(vs.at(0).size(), 0.0);
    for (const Vec& v : vs) axpy(out, 1.0, v);
    for (double& x : out) x /= double(vs.size());
    return out;
}

inline double clip(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

// d clip / d x; unit inside the interval (boundaries included, as in the
// usual clamp backward), zero on the flat regions.
inline double clip_grad(double x, double lo, double hi) {
    return (x >= lo && x <= hi) ? 1.0 : 0.0;
}

// Solve A·x = b for small dense A by Gauss-Jordan with partial pivoting.
inline Vec solve_linear(Mat a, Vec b) {
    if (a.rows != a.cols || b.size() != a.rows) fail(Errc::dimension_mismatch, "solve_linear: non-square system");
    const size_t n = a.rows;
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::fabs(a.at(r, col)) > std::fabs(a.at(pivot, col))) pivot = r;
        if (std::fabs(a.at(pivot, col)) < 1e-12) fail(Errc::degenerate, "solve_linear: singular matrix");
        if (pivot != col) {
            for (size_t c = 0; c < n; ++c) std::swap(a.at(pivot, c), a.at(col, c));
            std::swap(b[pivot], b[col]);
        }
        const double inv = 1.0 / a.at(col, col);
        for (size_t c = 0; c < n; ++c) a.at(col, c) *= inv;
        b[col] *= inv;
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a.at(r, col);
            if (f == 0.0) continue;
            for (size_t c = 0; c < n; ++c) a.at(r, c) -= f * a.at(col, c);
            b[r] -= f * b[col];
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a 64)
// ---------------------------------------------------------------------------

struct Fnv1a {
    uint64_t state = 0xcbf29ce484222325ULL;

    void update(const void* bytes, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(bytes);
        for (size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ULL;
        }
    }
    void update_f32(const std::vector<float>& v) { update(v.data(), v.size() * sizeof(float)); }
    void update_str(const std::string& s) { update(s.data(), s.size()); }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = state;
        for (int i = 15; i >= 0; --i) {
            out[size_t(i)] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }
};

inline std::string fnv1a_hex(const void* bytes, size_t n) {
    Fnv1a h;
    h.update(bytes, n);
    return h.hex();
}

}  // namespace synernet
