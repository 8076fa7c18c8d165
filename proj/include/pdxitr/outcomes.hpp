#pragma once

#include <optional>
#include <vector>

namespace pdxitr {

/// Caliper measurements of one mouse's tumor. days[0] must be 0.
struct VolumeTrajectory {
    std::vector<double> days;
    std::vector<double> volumes;

    /// Builds a trajectory from (major, minor) caliper axes in mm.
    static VolumeTrajectory from_axes(const std::vector<double>& days,
                                      const std::vector<double>& major_mm,
                                      const std::vector<double>& minor_mm);
};

/// Throws ValidationError unless days start at 0, increase strictly and
/// volumes are positive, with at least two measurements.
void check_trajectory(const VolumeTrajectory& traj);

/// Ellipsoid approximation l * w^2 * pi / 6 (mm^3).
double tumor_volume(double major_mm, double minor_mm);

/// -BAR in percent: larger is a better response. Only measurements strictly
/// after day 10 are candidates for the minimum; the running average includes
/// the baseline term.
double compute_bar(const VolumeTrajectory& traj);

struct TimeToDoubling {
    double log_days = 0.0;
    bool censored = false;
};

/// Natural log of the first measurement day with V >= 2 V0. Trajectories that
/// never double are right-censored at the last day.
TimeToDoubling compute_ttd(const VolumeTrajectory& traj);

}  // namespace pdxitr
