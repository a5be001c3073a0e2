#pragma once

#include <array>
#include <cstddef>

namespace refdata {

// Cluster sizes of the 15-cluster K-Means fit on PCA features (17,253 records).
inline constexpr std::array<std::size_t, 15> kPcaSizes = {7364, 1626, 704, 439, 411, 300, 222, 207,
                                                          164,  144,  143, 109, 98,  93,  29};

// Cluster sizes of the 15-cluster K-Means fit on the t-SNE embedding.
inline constexpr std::array<std::size_t, 15> kTsneSizes = {1169, 1141, 938, 916, 890, 849, 821, 753,
                                                           752,  741,  725, 682, 626, 579, 471};

// Labeled samples per PCA cluster (204 in total) and the purity of each.
inline constexpr std::array<std::size_t, 14> kPcaLabeledCounts = {80, 53, 27, 12, 8, 4, 3, 3, 2, 2, 4, 2, 2, 2};
inline constexpr std::array<double, 14> kPcaLabeledPurity = {0.425, 0.642, 0.815, 0.917, 0.75, 0.5, 0.667,
                                                             1.0,   1.0,   0.5,   0.5,   1.0,  1.0, 0.5};

} // namespace refdata
