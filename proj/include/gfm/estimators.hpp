#ifndef GFM_ESTIMATORS_HPP
#define GFM_ESTIMATORS_HPP

#include "gfm/phasor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfm {

// Number of samples in one fundamental period, rejecting non-integral ratios.
inline std::size_t samples_per_cycle(double w1, double ts)
{
    const double n = 2.0 * pi / (w1 * ts);
    const double r = std::round(n);
    if (r < 4.0 || std::abs(n - r) > 1e-6 * r)
        throw std::invalid_argument("fundamental period is not an integral number of samples (" +
                                    std::to_string(n) + ")");
    return static_cast<std::size_t>(r);
}

// Full-cycle DFT of the fundamental. t0 is the time stamp of window[0];
// phase is referenced to absolute time so a steady sinusoid gives a
// constant phasor regardless of where the window starts.
inline Phasor dft_phasor(std::span<const double> window, double w1, double ts, double t0 = 0.0)
{
    const double span_rad = static_cast<double>(window.size()) * w1 * ts;
    if (window.empty() || std::abs(span_rad - 2.0 * pi) > 1e-6)
        throw std::invalid_argument("DFT window must cover exactly one fundamental cycle");
    Phasor acc{};
    for (std::size_t k = 0; k < window.size(); ++k)
        acc += window[k] * std::polar(1.0, -w1 * (t0 + static_cast<double>(k) * ts));
    return acc * (sqrt2 / static_cast<double>(window.size()));
}

/// Sliding full-cycle DFT on a fixed sample grid. Samples are indexed by the
/// global step number so that the rotating reference is exp(-j w1 k Ts).
class PhasorEstimator {
public:
    PhasorEstimator(double w1, double ts)
        : n_(samples_per_cycle(w1, ts)), buf_(n_, 0.0), twiddle_(n_)
    {
        for (std::size_t k = 0; k < n_; ++k)
            twiddle_[k] = std::polar(1.0, -2.0 * pi * static_cast<double>(k) / static_cast<double>(n_));
    }

    void push(double x)
    {
        const std::size_t slot = count_ % n_;
        sum_ += (x - buf_[slot]) * twiddle_[slot];
        buf_[slot] = x;
        ++count_;
        if (count_ % n_ == 0) {
            // exact recompute once per cycle to bound round-off drift
            Phasor s{};
            for (std::size_t k = 0; k < n_; ++k)
                s += buf_[k] * twiddle_[k];
            sum_ = s;
        }
    }

    bool ready() const { return count_ >= n_; }
    Phasor phasor() const { return sum_ * (sqrt2 / static_cast<double>(n_)); }
    std::size_t window() const { return n_; }

private:
    std::size_t n_;
    std::vector<double> buf_;
    std::vector<Phasor> twiddle_;
    Phasor sum_{};
    std::size_t count_ = 0;
};

/// First-order all-pass H(s) = (w1 - s)/(w1 + s), bilinear with prewarping
/// at w1, giving exactly -90 degrees and unity gain at the fundamental.
class AllPass {
public:
    AllPass(double w1, double ts)
    {
        const double c = w1 / std::tan(w1 * ts / 2.0);
        a_ = (w1 - c) / (w1 + c);
    }

    double step(double x)
    {
        const double y = a_ * x + x_prev_ - a_ * y_prev_;
        x_prev_ = x;
        y_prev_ = y;
        return y;
    }

    double coefficient() const { return a_; }

private:
    double a_ = 0.0;
    double x_prev_ = 0.0;
    double y_prev_ = 0.0;
};

/// Instantaneous positive/negative sequence separation of an alpha-beta
/// stream. With Q the 90-degree lagging all-pass,
/// x1 = (x + jQ(x))/2 and x2 = (x - jQ(x))/2.
class SequenceSeparator {
public:
    struct Output {
        AlphaBeta positive;
        AlphaBeta negative;
    };

    SequenceSeparator(double w1, double ts) : qa_(w1, ts), qb_(w1, ts) {}

    Output step(AlphaBeta x)
    {
        const double qa = qa_.step(x.alpha);
        const double qb = qb_.step(x.beta);
        return {{0.5 * (x.alpha - qb), 0.5 * (x.beta + qa)},
                {0.5 * (x.alpha + qb), 0.5 * (x.beta - qa)}};
    }

private:
    AllPass qa_;
    AllPass qb_;
};

/// Half-cycle delayed signal cancellation, y = (x(t) - x(t - T/2))/2 with
/// linear interpolation between samples. Unity gain and zero phase at odd
/// harmonics, rejects DC and even harmonics.
class HalfCycleCanceller {
public:
    HalfCycleCanceller(double w1, double ts)
    {
        const double d = pi / (w1 * ts);
        n_ = static_cast<std::size_t>(std::floor(d));
        frac_ = d - static_cast<double>(n_);
        buf_.assign(n_ + 2, AlphaBeta{});
    }

    AlphaBeta step(AlphaBeta x)
    {
        if (!primed_) {
            std::fill(buf_.begin(), buf_.end(), x);
            primed_ = true;
        }
        head_ = (head_ + 1) % buf_.size();
        buf_[head_] = x;
        const auto &a = buf_[(head_ + buf_.size() - n_) % buf_.size()];
        const auto &b = buf_[(head_ + buf_.size() - n_ - 1) % buf_.size()];
        const double da = (1.0 - frac_) * a.alpha + frac_ * b.alpha;
        const double db = (1.0 - frac_) * a.beta + frac_ * b.beta;
        return {0.5 * (x.alpha - da), 0.5 * (x.beta - db)};
    }

private:
    std::size_t n_ = 0, head_ = 0;
    double frac_ = 0.0;
    bool primed_ = false;
    std::vector<AlphaBeta> buf_;
};

// Runs a separator over a whole stream.
inline std::vector<SequenceSeparator::Output> apf_separate(std::span<const AlphaBeta> stream, double w1,
                                                           double ts)
{
    SequenceSeparator sep(w1, ts);
    std::vector<SequenceSeparator::Output> out;
    out.reserve(stream.size());
    for (const auto &x : stream)
        out.push_back(sep.step(x));
    return out;
}

/// Fixed-horizon memory for incremental quantities:
/// delta(t) = x(t) - x(t - horizon). Not ready until a full horizon is stored.
template <typename T = Phasor>
class DeltaBuffer {
public:
    DeltaBuffer(double horizon, double ts)
        : horizon_(horizon), ts_(ts),
          depth_(static_cast<std::size_t>(std::llround(horizon / ts)))
    {
        if (horizon <= 0.0 || ts <= 0.0 || depth_ == 0)
            throw std::invalid_argument("delta buffer horizon must span at least one sample");
        ring_.assign(depth_ + 1, T{});
    }

    // Feeds one sample; returns the increment or nullopt while not ready.
    std::optional<T> push(double t, const T &now)
    {
        if (count_ > 0 && !(t > last_t_))
            throw std::invalid_argument("delta buffer must be fed monotonically in time");
        last_t_ = t;
        ring_[count_ % ring_.size()] = now;
        ++count_;
        if (count_ <= depth_)
            return std::nullopt;
        return now - ring_[(count_ - 1 - depth_) % ring_.size()];
    }

    bool ready() const { return count_ > depth_; }

    // Value stored one horizon ago (the pre-fault memory), if available.
    std::optional<T> delayed() const
    {
        if (!ready()) return std::nullopt;
        return ring_[(count_ - 1 - depth_) % ring_.size()];
    }

    double horizon() const { return horizon_; }
    double ts() const { return ts_; }

private:
    double horizon_;
    double ts_;
    std::size_t depth_;
    std::vector<T> ring_;
    std::size_t count_ = 0;
    double last_t_ = 0.0;
};

/// Per-phase peak from orthogonal components: I = sqrt(x^2 + x_q^2) where x_q
/// is the sample a quarter cycle earlier. Output is the three-phase maximum.
class PeakTracker {
public:
    PeakTracker(double w1, double ts) : quarter_(samples_per_cycle(w1, ts) / 4)
    {
        for (auto &d : delay_)
            d.assign(quarter_, 0.0);
    }

    double push(const std::array<double, 3> &i)
    {
        const std::size_t slot = count_ % quarter_;
        for (std::size_t p = 0; p < 3; ++p) {
            const double q = delay_[p][slot];
            peaks_[p] = std::sqrt(i[p] * i[p] + q * q);
            delay_[p][slot] = i[p];
        }
        ++count_;
        return i_max();
    }

    double i_max() const { return std::max({peaks_[0], peaks_[1], peaks_[2]}); }
    const std::array<double, 3> &peaks() const { return peaks_; }

private:
    std::size_t quarter_;
    std::array<std::vector<double>, 3> delay_;
    std::array<double, 3> peaks_{};
    std::size_t count_ = 0;
};

inline double max_peak(const std::array<double, 3> &peaks)
{
    return std::max({peaks[0], peaks[1], peaks[2]});
}

/// First-order low-pass, backward Euler.
class LowPass {
public:
    LowPass() = default;
    LowPass(double corner_hz, double ts, double initial = 0.0)
        : k_(1.0 - std::exp(-2.0 * pi * corner_hz * ts)), y_(initial)
    {
    }
    double step(double x) { return y_ += k_ * (x - y_); }
    double value() const { return y_; }
    void reset(double y) { y_ = y; }

private:
    double k_ = 1.0;
    double y_ = 0.0;
};

/// First-order high-pass as x minus its low-pass.
class HighPass {
public:
    HighPass() = default;
    HighPass(double corner_hz, double ts) : lp_(corner_hz, ts) {}
    double step(double x) { return x - lp_.step(x); }
    void reset(double dc) { lp_.reset(dc); }

private:
    LowPass lp_;
};

} // namespace gfm

#endif
