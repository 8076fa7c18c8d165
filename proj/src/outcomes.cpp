#include "pdxitr/outcomes.hpp"

#include "pdxitr/core.hpp"

#include <cmath>
#include <numbers>

namespace pdxitr {

VolumeTrajectory VolumeTrajectory::from_axes(const std::vector<double>& days,
                                             const std::vector<double>& major_mm,
                                             const std::vector<double>& minor_mm) {
    if (days.size() != major_mm.size() || days.size() != minor_mm.size())
        throw ValidationError("trajectory columns have different lengths");
    VolumeTrajectory traj;
    traj.days = days;
    traj.volumes.reserve(days.size());
    for (std::size_t k = 0; k < days.size(); ++k) traj.volumes.push_back(tumor_volume(major_mm[k], minor_mm[k]));
    return traj;
}

void check_trajectory(const VolumeTrajectory& traj) {
    if (traj.days.size() != traj.volumes.size())
        throw ValidationError("trajectory days and volumes differ in length");
    if (traj.days.size() < 2) throw ValidationError("trajectory needs at least two measurements");
    if (traj.days.front() != 0.0) throw ValidationError("trajectory must start at day 0");
    for (std::size_t k = 1; k < traj.days.size(); ++k)
        if (!(traj.days[k] > traj.days[k - 1]))
            throw ValidationError("trajectory days must be strictly increasing");
    for (double v : traj.volumes)
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("tumor volumes must be positive");
}

double tumor_volume(double major_mm, double minor_mm) {
    if (!(major_mm > 0.0) || !(minor_mm > 0.0)) throw ValidationError("tumor axes must be positive");
    if (minor_mm > major_mm) throw ValidationError("minor axis exceeds major axis");
    return major_mm * minor_mm * minor_mm * std::numbers::pi / 6.0;
}

double compute_bar(const VolumeTrajectory& traj) {
    check_trajectory(traj);
    const double v0 = traj.volumes.front();
    double running = 0.0;
    std::optional<double> best;
    for (std::size_t t = 0; t < traj.days.size(); ++t) {
        running += (traj.volumes[t] - v0) / v0;
        if (traj.days[t] > 10.0) {
            double avg = running / static_cast<double>(t + 1);
            if (!best || avg < *best) best = avg;
        }
    }
    if (!best) throw ValidationError("insufficient follow-up: no measurement after day 10");
    return -(*best) * 100.0;
}

TimeToDoubling compute_ttd(const VolumeTrajectory& traj) {
    check_trajectory(traj);
    const double target = 2.0 * traj.volumes.front();
    for (std::size_t t = 1; t < traj.days.size(); ++t)
        if (traj.volumes[t] >= target) return {std::log(traj.days[t]), false};
    return {std::log(traj.days.back()), true};
}

}  // namespace pdxitr
