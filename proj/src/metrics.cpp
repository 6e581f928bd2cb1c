#include "voxseg/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace voxseg {

OverlapCounts overlap_counts(const LabelVolume& p, const LabelVolume& y) {
    if (p.dims != y.dims) throw std::invalid_argument("dsc: dim mismatch");
    OverlapCounts c;
    for (size_t i = 0; i < p.mask.size(); ++i) {
        c.pred += p.mask[i];
        c.truth += y.mask[i];
        c.inter += (p.mask[i] & y.mask[i]);
    }
    return c;
}

double dsc(const LabelVolume& p, const LabelVolume& y) {
    const OverlapCounts c = overlap_counts(p, y);
    if (c.pred == 0 && c.truth == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.truth);
}

EvalSummary summarize(const std::vector<CaseEval>& rows) {
    EvalSummary s;
    if (rows.empty()) return s;
    double sum = 0.0;
    s.max = rows[0].dsc;
    s.min = rows[0].dsc;
    for (const auto& r : rows) {
        sum += r.dsc;
        if (r.dsc > s.max) s.max = r.dsc;
        if (r.dsc < s.min) s.min = r.dsc;
    }
    s.mean = sum / static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& r : rows) {
        const double d = r.dsc - s.mean;
        ss += d * d;
    }
    s.stddev = std::sqrt(ss / static_cast<double>(rows.size()));
    return s;
}

std::string eval_report_csv(const std::vector<CaseEval>& rows) {
    std::ostringstream out;
    out << "case_id,dsc,pred_voxels,truth_voxels,intersection,components_before,components_after\n";
    out.precision(6);
    out << std::fixed;
    for (const auto& r : rows) {
        out << r.case_id << ',' << r.dsc << ',' << r.counts.pred << ',' << r.counts.truth
            << ',' << r.counts.inter << ',' << r.components_before << ','
            << r.components_after << '\n';
    }
    const EvalSummary s = summarize(rows);
    out << "summary,mean=" << s.mean << ",std=" << s.stddev << ",max=" << s.max
        << ",min=" << s.min << ",,\n";
    return out.str();
}

} // namespace voxseg
