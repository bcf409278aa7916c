#pragma once

// Random URDF trees for property tests. The main path from the root carries
// every joint type at least once (when long enough); side branches hang off
// random main-path links so chain extraction has something to skip.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace gen {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string triple(double a, double b, double c) { return num(a) + " " + num(b) + " " + num(c); }

// Half coordinate axes (with sign), half arbitrary directions, left
// unnormalised so the parser has to do it.
inline std::string random_axis(std::mt19937_64& rng) {
    if (pick(rng, 2) == 0) {
        double v[3] = {0, 0, 0};
        v[pick(rng, 3)] = pick(rng, 2) ? 1.0 : -1.0;
        return triple(v[0], v[1], v[2]);
    }
    double v[3];
    do {
        for (double& c : v) c = uniform(rng, -2.0, 2.0);
    } while (std::hypot(v[0], v[1], v[2]) < 0.2);
    return triple(v[0], v[1], v[2]);
}

inline const char* kTypes[] = {"revolute", "continuous", "prismatic", "fixed", "planar", "floating"};

inline std::string random_joint(std::mt19937_64& rng, const std::string& name, const std::string& type,
                                const std::string& parent, const std::string& child) {
    std::string x = "  <joint name=\"" + name + "\" type=\"" + type + "\">\n";
    x += "    <parent link=\"" + parent + "\"/>\n    <child link=\"" + child + "\"/>\n";
    if (pick(rng, 5) != 0)
        x += "    <origin xyz=\"" + triple(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)) +
             "\" rpy=\"" + triple(uniform(rng, -M_PI, M_PI), uniform(rng, -1.5, 1.5), uniform(rng, -M_PI, M_PI)) +
             "\"/>\n";
    if (type != "fixed" && type != "floating") {
        if (pick(rng, 6) != 0) x += "    <axis xyz=\"" + random_axis(rng) + "\"/>\n";
    }
    if ((type == "revolute" || type == "prismatic") && pick(rng, 2) == 0)
        x += "    <limit lower=\"" + num(uniform(rng, -2, -0.5)) + "\" upper=\"" + num(uniform(rng, 0.5, 2)) +
             "\" effort=\"1\" velocity=\"1\"/>\n";
    return x + "  </joint>\n";
}

struct Robot {
    std::string xml;
    std::vector<std::string> main_path;  // link names from the root down
};

/// Tree of depth <= max_depth. With max_depth >= 6 the main path contains all
/// six joint types.
inline Robot random_robot(std::mt19937_64& rng, std::size_t max_depth = 8) {
    const std::size_t depth = std::max<std::size_t>(1, std::min<std::size_t>(max_depth, 6 + pick(rng, 3)));
    std::vector<std::string> types;
    if (depth >= 6) {
        types.assign(std::begin(kTypes), std::end(kTypes));
        std::shuffle(types.begin(), types.end(), rng);
    }
    while (types.size() < depth) types.insert(types.begin() + pick(rng, types.size() + 1), kTypes[pick(rng, 6)]);

    Robot r;
    std::string links = "  <link name=\"l0\"/>\n", joints;
    r.main_path.push_back("l0");
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string child = "l" + std::to_string(i + 1);
        links += "  <link name=\"" + child + "\">\n    <visual><geometry><box size=\"1 1 1\"/></geometry></visual>\n"
                 "  </link>\n";
        joints += random_joint(rng, "j" + std::to_string(i + 1), types[i], r.main_path.back(), child);
        r.main_path.push_back(child);
    }
    // side branches, never deeper than max_depth overall
    std::size_t branch = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (pick(rng, 3) != 0) continue;
        std::string parent = r.main_path[i];
        const std::size_t room = max_depth - i;
        const std::size_t len = 1 + pick(rng, std::min<std::size_t>(room, 3));
        for (std::size_t s = 0; s < len; ++s, ++branch) {
            const std::string child = "b" + std::to_string(branch);
            links += "  <link name=\"" + child + "\"/>\n";
            joints += random_joint(rng, "jb" + std::to_string(branch), kTypes[pick(rng, 6)], parent, child);
            parent = child;
        }
    }
    r.xml = "<?xml version=\"1.0\"?>\n<robot name=\"random\">\n" + links + joints + "</robot>\n";
    return r;
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -M_PI,
                                         double hi = M_PI) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
}

}  // namespace gen
