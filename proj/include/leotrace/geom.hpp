#ifndef LEOTRACE_GEOM_HPP
#define LEOTRACE_GEOM_HPP

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "leotrace/errors.hpp"

namespace leotrace::geom {

inline constexpr double kEarthRadiusM = 6371.0e3;
inline constexpr double kMuEarthM3S2 = 3.986004418e14;
inline constexpr double kEarthRotationRadS = 7.2921159e-5;
inline constexpr double kSpeedOfLightMS = 299792458.0;

// Walker-delta shell plus the per-link parameters that every simulation
// run needs alongside the orbital geometry.
struct ConstellationSpec {
    double altitude_km = 550.0;
    int num_orbits = 72;
    int sats_per_orbit = 22;
    double inclination_deg = 53.0;
    int phase_factor = 0;
    double min_elevation_deg = 25.0;
    double isl_rate_bps = 50e6;
    double gsl_rate_bps = 50e6;
    int isl_queue_pkts = 200;
    int gsl_queue_pkts = 200;

    int num_satellites() const { return num_orbits * sats_per_orbit; }
    double semi_major_axis_m() const { return kEarthRadiusM + altitude_km * 1000.0; }
    double orbital_period_s() const {
        const double a = semi_major_axis_m();
        return 2.0 * M_PI * std::sqrt(a * a * a / kMuEarthM3S2);
    }

    // Throws ConfigError when a field is outside its legal range.
    void validate() const;
};

struct GroundStation {
    int id = 0;
    std::string name;
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;
    double altitude_m = 0.0;
};

struct Position3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    Position3 operator-(const Position3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Position3 operator+(const Position3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Position3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(const Position3& a, const Position3& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

// Circular-orbit position of satellite (orbit, slot) at time t in the
// inertial frame. Orbit planes are spaced evenly in RAAN, slots evenly in
// anomaly, with the Walker phase factor offsetting neighbouring planes.
Position3 satellite_position(const ConstellationSpec& spec, int orbit, int slot, double t_s);

// Ground station position in the same inertial frame; the Earth rotates
// underneath at the sidereal rate.
Position3 ground_station_position(const GroundStation& gs, double t_s);

// Elevation of `sat` above the horizon plane of `gs`, in degrees.
// Negative below the horizon. Throws UsageError on coincident points.
double elevation_deg(const Position3& gs_pos, const Position3& sat_pos);

double propagation_delay_s(const Position3& a, const Position3& b);

// CSV: id,name,latitude_deg,longitude_deg,altitude_m (header required).
std::vector<GroundStation> load_ground_stations_csv(std::istream& in);
std::vector<GroundStation> load_ground_stations_file(const std::string& path);

} // namespace leotrace::geom

#endif
