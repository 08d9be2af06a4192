#include "leotrace/geom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace leotrace::geom {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

} // namespace

void ConstellationSpec::validate() const {
    if (num_orbits < 1 || sats_per_orbit < 1)
        throw ConfigError("constellation: orbits and satellites per orbit must be >= 1");
    if (!(inclination_deg > 0.0 && inclination_deg <= 180.0))
        throw ConfigError("constellation: inclination must be in (0, 180] degrees");
    if (phase_factor < 0 || phase_factor >= num_orbits)
        throw ConfigError("constellation: phase factor must satisfy 0 <= F < num_orbits");
    if (!(min_elevation_deg >= 0.0 && min_elevation_deg < 90.0))
        throw ConfigError("constellation: min elevation must be in [0, 90) degrees");
    if (altitude_km <= 0.0)
        throw ConfigError("constellation: altitude must be positive");
    if (isl_rate_bps <= 0.0 || gsl_rate_bps <= 0.0)
        throw ConfigError("constellation: link rates must be positive");
    if (isl_queue_pkts <= 0 || gsl_queue_pkts <= 0)
        throw ConfigError("constellation: queue sizes must be positive");
}

Position3 satellite_position(const ConstellationSpec& spec, int orbit, int slot, double t_s) {
    if (orbit < 0 || orbit >= spec.num_orbits)
        throw std::out_of_range("satellite_position: orbit index out of range");
    if (slot < 0 || slot >= spec.sats_per_orbit)
        throw std::out_of_range("satellite_position: slot index out of range");

    const double a = spec.semi_major_axis_m();
    const double period = spec.orbital_period_s();
    const double two_pi = 2.0 * M_PI;

    const double raan = two_pi * static_cast<double>(orbit) / spec.num_orbits;
    const double anomaly = two_pi * static_cast<double>(slot) / spec.sats_per_orbit +
                           two_pi * static_cast<double>(orbit) * spec.phase_factor /
                               (static_cast<double>(spec.num_orbits) * spec.sats_per_orbit) +
                           two_pi * t_s / period;
    const double incl = spec.inclination_deg * kDegToRad;

    // In-plane position, then rotate by inclination about x, then RAAN about z.
    const double px = a * std::cos(anomaly);
    const double py = a * std::sin(anomaly);

    const double qx = px;
    const double qy = py * std::cos(incl);
    const double qz = py * std::sin(incl);

    return {qx * std::cos(raan) - qy * std::sin(raan),
            qx * std::sin(raan) + qy * std::cos(raan),
            qz};
}

Position3 ground_station_position(const GroundStation& gs, double t_s) {
    if (gs.latitude_deg < -90.0 || gs.latitude_deg > 90.0)
        throw ConfigError("ground station latitude out of range");
    if (gs.longitude_deg < -180.0 || gs.longitude_deg > 180.0)
        throw ConfigError("ground station longitude out of range");

    const double r = kEarthRadiusM + gs.altitude_m;
    const double lat = gs.latitude_deg * kDegToRad;
    const double lon = gs.longitude_deg * kDegToRad + kEarthRotationRadS * t_s;
    return {r * std::cos(lat) * std::cos(lon),
            r * std::cos(lat) * std::sin(lon),
            r * std::sin(lat)};
}

double elevation_deg(const Position3& gs_pos, const Position3& sat_pos) {
    const double gs_norm = gs_pos.norm();
    if (gs_norm <= 0.0)
        throw UsageError("elevation_deg: ground position at the origin");
    const Position3 to_sat = sat_pos - gs_pos;
    const double range = to_sat.norm();
    if (range <= 1e-9)
        throw UsageError("elevation_deg: coincident positions");
    const double sin_el = dot(to_sat, gs_pos) / (gs_norm * range);
    return std::asin(std::clamp(sin_el, -1.0, 1.0)) / kDegToRad;
}

double propagation_delay_s(const Position3& a, const Position3& b) {
    return (a - b).norm() / kSpeedOfLightMS;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace

std::vector<GroundStation> load_ground_stations_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("ground stations: empty input");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "id,name,latitude_deg,longitude_deg,altitude_m")
        throw ParseError("ground stations: missing or malformed header");

    std::vector<GroundStation> stations;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw ParseError("ground stations: line " + std::to_string(line_no) +
                             ": expected 5 fields");
        GroundStation gs;
        try {
            gs.id = std::stoi(fields[0]);
            gs.name = fields[1];
            gs.latitude_deg = std::stod(fields[2]);
            gs.longitude_deg = std::stod(fields[3]);
            gs.altitude_m = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw ParseError("ground stations: line " + std::to_string(line_no) +
                             ": invalid numeric field");
        }
        for (const auto& other : stations)
            if (other.id == gs.id)
                throw ValidationError("ground stations: duplicate id " + fields[0]);
        stations.push_back(std::move(gs));
    }
    return stations;
}

std::vector<GroundStation> load_ground_stations_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open ground stations file: " + path);
    return load_ground_stations_csv(f);
}

} // namespace leotrace::geom
