#pragma once

#include <cstdint>
#include <utility>

#include "cyclevqa/corpus.hpp"

namespace cyclevqa {

// Deterministic grid-world corpus: each image is a 3x3 grid of colored shapes
// rendered as 9 region feature vectors of dimension 16 (presence, one-hot
// color, one-hot shape, one-hot row/col, normalized position). Questions come
// from four template families (count / color / shape / existence); template 0
// is the original phrasing, templates 1..4 are semantically identical
// rephrasings, so n_rephrasings can be at most 4. Ground-truth answers are
// computed from the scene, so soft accuracy is exactly 0 or 1.
std::pair<DatasetSplit, FeatureStore> generate_synthetic_world(std::uint64_t seed, int n_images,
                                                               int n_questions_per_image,
                                                               int n_rephrasings);

// The split restricted to group originals, groups dropped. Used to emit
// training data whose rephrasing templates stay held out.
DatasetSplit originals_only(const DatasetSplit& split);

inline constexpr int kSyntheticRegions = 9;
inline constexpr int kSyntheticFeatureDim = 16;
inline constexpr int kSyntheticMaxRephrasings = 4;

}  // namespace cyclevqa
