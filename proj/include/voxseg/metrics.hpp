#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxseg/volume.hpp"

namespace voxseg {

// Dice-Sorensen coefficient 2|P n Y| / (|P| + |Y|), in [0, 1].
// Both masks empty -> 1; exactly one empty -> 0.
double dsc(const LabelVolume& p, const LabelVolume& y);

struct OverlapCounts {
    int64_t pred = 0, truth = 0, inter = 0;
};
OverlapCounts overlap_counts(const LabelVolume& p, const LabelVolume& y);

struct CaseEval {
    std::string case_id;
    double dsc = 0.0;
    OverlapCounts counts;
    int64_t components_before = 0;
    int64_t components_after = 0;
};

struct EvalSummary {
    double mean = 0.0;
    double stddev = 0.0; // population
    double max = 0.0;
    double min = 0.0;
};

EvalSummary summarize(const std::vector<CaseEval>& rows);

// case_id, dsc, |P|, |Y|, |PnY|, components_before, components_after
// plus a trailing summary row (mean, population stddev, max, min).
std::string eval_report_csv(const std::vector<CaseEval>& rows);

} // namespace voxseg
