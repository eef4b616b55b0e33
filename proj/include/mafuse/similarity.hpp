#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

enum class SimilarityMetric { mutual_information, ssd };

/// Mutual information in nats from a bins x bins joint histogram of the
/// masked voxels. Each image is min-max binned over the mask; the maximum
/// lands in the last bin. A constant image gives 0.
double mutual_information(const Volume& a, const Volume& b, const LabelMap* mask = nullptr, int bins = 32);

/// Binned Shannon entropy (nats) with the same binning as mutual_information.
double binned_entropy(const Volume& a, const LabelMap* mask = nullptr, int bins = 32);

/// Sum of squared differences over the mask (all voxels when null).
double ssd(const Volume& a, const Volume& b, const LabelMap* mask = nullptr);

struct AtlasRef {
    std::string id;
    const Volume* image = nullptr;
};

struct RankedAtlas {
    std::string id;
    double score = 0.0;
};

/// Best first: descending MI or ascending SSD, ties by ascending id.
std::vector<RankedAtlas> rank_atlases(const Volume& target, std::span<const AtlasRef> atlases, SimilarityMetric metric,
                                      const LabelMap* mask = nullptr, int bins = 32);

/// One MI weight per atlas over the support-union mask.
double semi_global_weight(const Volume& target, const Volume& warped_atlas, const LabelMap& mask, int bins = 32);

}  // namespace mafuse
