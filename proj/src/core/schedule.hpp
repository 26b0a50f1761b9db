#pragma once

#include <cmath>

namespace ropnet::core {

// Cosine annealing with warm restarts: cycle lengths T0, T0*factor, ...
// lr = eta_min + (base - eta_min)/2 * (1 + cos(pi * t / T_cur)).
inline double cosine_warm_restart_lr(long step, double base_lr, long t0 = 40,
                                     long factor = 2, double eta_min = 0.0) {
    long t = step;
    long cycle = t0;
    while (t >= cycle) {
        t -= cycle;
        cycle *= factor;
    }
    return eta_min + (base_lr - eta_min) * 0.5 *
                         (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                         static_cast<double>(cycle)));
}

}  // namespace ropnet::core
