#include "types.hpp"

#include <cmath>

namespace happymap {

void Dataset::validate() const {
    if (rows == 0) fail(ErrorCode::InvalidArgument, "dataset must have at least one row");
    if (features.size() != rows * dim)
        fail(ErrorCode::InvalidArgument, "feature matrix size mismatch");
    if (!labels.empty() && labels.size() != rows)
        fail(ErrorCode::InvalidArgument, "label vector size mismatch");
    if (groups.size() != rows * n_groups)
        fail(ErrorCode::InvalidArgument, "group matrix size mismatch");
    if (!domain.empty() && domain.size() != rows)
        fail(ErrorCode::InvalidArgument, "domain tag size mismatch");
    for (double v : groups)
        if (v != 0.0 && v != 1.0)
            fail(ErrorCode::InvalidArgument, "group columns must be {0,1}-valued");
    if (!miss_mask.empty()) {
        if (miss_mask.size() != rows * dim)
            fail(ErrorCode::InvalidArgument, "missingness mask size mismatch");
        if (complete.size() != rows)
            fail(ErrorCode::InvalidArgument, "complete flags must accompany the mask");
        for (std::size_t i = 0; i < rows; ++i) {
            bool all = true;
            for (std::size_t j = 0; j < dim; ++j) {
                if (!miss_mask[i * dim + j]) all = false;
                if (miss_mask[i * dim + j] && std::isnan(features[i * dim + j]))
                    fail(ErrorCode::InvalidArgument, "observed cell holds NaN");
            }
            if ((complete[i] != 0) != all)
                fail(ErrorCode::InvalidArgument, "complete flag disagrees with mask");
        }
    }
    if (!feature_names.empty() && feature_names.size() != dim)
        fail(ErrorCode::InvalidArgument, "feature name count mismatch");
    if (!group_names.empty() && group_names.size() != n_groups)
        fail(ErrorCode::InvalidArgument, "group name count mismatch");
}

int Dataset::find_feature(const std::string& name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j)
        if (feature_names[j] == name) return static_cast<int>(j);
    return -1;
}

} // namespace happymap
