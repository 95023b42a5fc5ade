#pragma once

#include "evetac/event.hpp"
#include "evetac/geometry.hpp"

namespace evetac {

/*
 * Block-matching optical flow on event images: 16x16 blocks, +-8 px integer
 * search (coarse step 2, then +-1 refinement), SAD cost on the polarity
 * trits. Blocks without enough event pixels are skipped; the result is the
 * mean displacement magnitude over the remaining blocks.
 */
struct BlockFlowConfig {
    int block = 16;
    int search = 8;
    int min_active = 8; // event pixels required in the source block
};

struct FlowEstimate {
    double mean_magnitude = 0.0; // px per image pair
    int blocks_used = 0;
};

FlowEstimate block_flow(const EventImage& from, const EventImage& to, const Rect& region,
                        const BlockFlowConfig& cfg = {});

} // namespace evetac
