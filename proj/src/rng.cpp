#include "disent/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "disent/error.hpp"

namespace disent {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_int: n must be positive");
    // Reject the 2^64 mod n lowest values so every residue is equally likely.
    const std::uint64_t threshold = (std::uint64_t{0} - n) % n;
    std::uint64_t x = engine_();
    while (x < threshold) x = engine_();
    return x % n;
}

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("beta: shape parameters must be positive");
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(engine_);
    const double y = gb(engine_);
    return x / (x + y);
}

torch::Tensor Rng::normal_tensor(at::IntArrayRef shape, torch::Dtype dtype) {
    auto out = torch::empty(shape, torch::kFloat64);
    auto* p = out.data_ptr<double>();
    const auto n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) p[i] = normal();
    return out.to(dtype);
}

std::uint64_t Rng::fork_seed() { return splitmix64(engine_()); }

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << std::hexfloat << spare_;
    return os.str();
}

void Rng::set_state(const std::string& state) {
    std::istringstream is(state);
    int spare_flag = 0;
    std::string spare_text;
    is >> engine_ >> spare_flag >> spare_text;
    if (is.fail()) throw InvalidArgument("Rng::set_state: malformed state");
    has_spare_ = spare_flag != 0;
    spare_ = std::strtod(spare_text.c_str(), nullptr);
}

}  // namespace disent
