#include "fft.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace upwave::detail {
namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative Cooley-Tukey, n a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

// Bluestein chirp-z: expresses a length-n DFT as a circular convolution of
// length >= 2n-1, evaluated with a power-of-two FFT. Quadratic phase indices
// are reduced mod 2n to keep the argument of sin/cos small and exact.
void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n + 1);
    const double sign = inverse ? 1.0 : -1.0;

    std::vector<std::complex<double>> w(n);  // w[k] = exp(sign*i*pi*k^2/n)
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        w[k] = {std::cos(ang), std::sin(ang)};
    }

    std::vector<std::complex<double>> fa(m), fb(m);
    for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * w[k];
    fb[0] = std::conj(w[0]);
    for (std::size_t k = 1; k < n; ++k) {
        fb[k] = std::conj(w[k]);
        fb[m - k] = std::conj(w[k]);
    }
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    fft_pow2(fa, true);

    for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * w[k];
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size())) {
        fft_pow2(a, inverse);
    } else {
        fft_bluestein(a, inverse);
    }
}

std::vector<double> analytic_envelope(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> env(n, 0.0);
    if (n == 0) return env;
    if (n == 1) {
        env[0] = std::abs(x[0]);
        return env;
    }
    std::vector<std::complex<double>> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = {x[i], 0.0};
    fft(z, false);
    // Analytic-signal spectrum: keep DC (and Nyquist for even n), double the
    // positive frequencies, zero the negative ones.
    const std::size_t half = n / 2;
    for (std::size_t k = 1; k < half; ++k) z[k] *= 2.0;
    if (n % 2 == 0) {
        for (std::size_t k = half + 1; k < n; ++k) z[k] = 0.0;
    } else {
        z[half] *= 2.0;
        for (std::size_t k = half + 1; k < n; ++k) z[k] = 0.0;
    }
    fft(z, true);
    for (std::size_t i = 0; i < n; ++i) env[i] = std::abs(z[i]);
    return env;
}

}  // namespace upwave::detail
