// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/types.hpp"

#include <array>

namespace zoomsplat::detail {

inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792,
                                              0.31539156525252005, -1.0925484305920792,
                                              0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554,
                                              -0.4570457994644658, 0.3731763325901154,
                                              -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

/// Basis values and their partial derivatives with respect to the
/// (unnormalized) direction components. Terms past `degree` stay zero.
void sh_basis_with_jacobian(const Vec3 &d, int degree, std::array<double, 16> &basis,
                            std::array<Vec3, 16> *jacobian);

} // namespace zoomsplat::detail
