#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "firescar/grid.hpp"

namespace oracle {

struct Counts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts confusion(const firescar::Mask& pred, const firescar::Mask& label) {
    Counts c;
    for (int r = 0; r < pred.height(); ++r)
        for (int col = 0; col < pred.width(); ++col) {
            const bool p = pred(r, col), l = label(r, col);
            if (p && l) ++c.tp;
            else if (p) ++c.fp;
            else if (l) ++c.fn;
            else ++c.tn;
        }
    return c;
}

/// Components by repeated min-label relaxation over the 8-neighbourhood.
inline firescar::Grid<int> components(const firescar::Mask& m) {
    const int h = m.height(), w = m.width();
    firescar::Grid<int> id(h, w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (m(r, c)) id(r, c) = r * w + c + 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                if (!id(r, c)) continue;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int y = r + dy, x = c + dx;
                        if (y < 0 || x < 0 || y >= h || x >= w || !id(y, x)) continue;
                        if (id(y, x) < id(r, c)) id(r, c) = id(y, x), changed = true;
                    }
            }
    }
    return id;
}

/// Pixel-pair brute force of the distant-component filter.
inline firescar::Mask filter(const firescar::Mask& m, double pixel_size_m, double max_m) {
    const auto id = components(m);
    struct Px {
        int r, c, id;
    };
    std::vector<Px> px;
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if (id(r, c)) px.push_back({r, c, id(r, c)});
    if (px.empty()) return m;
    const double cy = (m.height() - 1) / 2.0, cx = (m.width() - 1) / 2.0;
    std::map<int, std::pair<double, long long>> stats;  // id -> (closest squared distance to center, area)
    for (const auto& p : px) {
        auto [it, fresh] = stats.try_emplace(p.id, std::numeric_limits<double>::infinity(), 0);
        it->second.first = std::min(it->second.first, (p.r - cy) * (p.r - cy) + (p.c - cx) * (p.c - cx));
        ++it->second.second;
    }
    int central = stats.begin()->first;
    for (const auto& [cid, st] : stats) {
        const auto& cur = stats[central];
        if (st.first < cur.first || (st.first == cur.first && st.second > cur.second)) central = cid;
    }
    firescar::Mask out = m;
    for (const auto& p : px) {
        if (p.id == central) continue;
        double gap = std::numeric_limits<double>::infinity();
        for (const auto& q : px)
            if (q.id == p.id)
                for (const auto& s : px)
                    if (s.id == central) gap = std::min(gap, std::hypot(double(q.r - s.r), double(q.c - s.c)));
        if (gap * pixel_size_m > max_m) out(p.r, p.c) = 0;
    }
    return out;
}

/// Random mask of a few rectangular and blob components.
inline firescar::Mask multi_component_mask(std::mt19937_64& rng, int size) {
    firescar::Mask m(size, size);
    std::uniform_int_distribution<int> parts(2, 5), pos(0, size - 1), ext(1, 6);
    const int n = parts(rng);
    for (int k = 0; k < n; ++k) {
        const int r0 = pos(rng), c0 = pos(rng), hh = ext(rng), ww = ext(rng);
        for (int r = r0; r < std::min(size, r0 + hh); ++r)
            for (int c = c0; c < std::min(size, c0 + ww); ++c) m(r, c) = 1;
    }
    return m;
}

}  // namespace oracle
