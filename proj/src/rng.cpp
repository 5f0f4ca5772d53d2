#include "mmsb/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mmsb {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Absorb one key word; distinct multipliers keep (a,b) and (b,a) apart.
inline std::uint64_t absorb(std::uint64_t state, std::uint64_t word, std::uint64_t mult) {
    std::uint64_t s = state ^ (word * mult + 0x9E3779B97F4A7C15ULL);
    splitmix64(s);
    return s;
}

}  // namespace

Rng::Rng(std::uint64_t seed, Stream kind, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = seed;
    s = absorb(s, static_cast<std::uint64_t>(kind), 0xD6E8FEB86659FD93ULL);
    s = absorb(s, a, 0xA3B195354A39B70DULL);
    s = absorb(s, b, 0x1B03738712FAD5C9ULL);
    s = absorb(s, c, 0xC2B2AE3D27D4EB4FULL);
    // Burn a couple of outputs so weakly mixed keys decorrelate.
    splitmix64(s);
    splitmix64(s);
    state_ = s;
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::next_unit_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_unit() - 1.0;
        v = 2.0 * next_unit() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
}

double Rng::next_gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("next_gamma: shape must be positive");
    if (shape < 1.0) {
        // Boosting trick: Gamma(a) = Gamma(a+1) * U^{1/a}.
        double u = next_unit_open();
        return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = next_normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = next_unit_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

void Rng::next_dirichlet(const std::vector<double>& alpha, std::vector<double>& out) {
    const int k = static_cast<int>(alpha.size());
    out.resize(k);
    if (k == 1) {
        out[0] = 1.0;
        return;
    }
    // log of each gamma draw; small shapes produce log values directly from
    // the boosting identity, avoiding underflow before normalization.
    double max_lg = -1e300;
    for (int i = 0; i < k; ++i) {
        double a = alpha[i];
        double lg;
        if (a < 1.0) {
            double u = next_unit_open();
            lg = std::log(next_gamma(a + 1.0)) + std::log(u) / a;
        } else {
            lg = std::log(next_gamma(a));
        }
        out[i] = lg;
        if (lg > max_lg) max_lg = lg;
    }
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        out[i] = std::exp(out[i] - max_lg);
        sum += out[i];
    }
    for (int i = 0; i < k; ++i) out[i] /= sum;
}

int Rng::next_categorical(const double* probs, int k) {
    double u = next_unit();
    double cum = 0.0;
    for (int i = 0; i < k; ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return k - 1;  // rounding residue
}

bool Rng::next_bernoulli(double p) { return next_unit() < p; }

}  // namespace mmsb
