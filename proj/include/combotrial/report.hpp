#pragma once

// Text and CSV renderings of simulation output. The text table prints one
// row per drug B level, highest level first, with drug A levels across.

#include <cstdarg>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "combotrial/design.hpp"
#include "combotrial/simulator.hpp"

namespace combotrial {

namespace detail {

inline std::string fmt(const char* f, ...) {
    char buf[256];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

/// One block of the two-row layout: for each B level (descending) the row of
/// values across A levels, with `prec` decimals in a field of `width`.
inline void grid_block(std::vector<std::string>& rows, const Matrix& m, int width, int prec) {
    const auto I = m.rows(), J = m.cols();
    for (Eigen::Index j = J - 1, r = 0; j >= 0; --j, ++r) {
        std::string& line = rows[static_cast<std::size_t>(r)];
        for (Eigen::Index i = 0; i < I; ++i) line += fmt("%*.*f", width, prec, m(i, j));
        line += "   ";
    }
}

inline std::string header_block(Eigen::Index levels, int width) {
    std::string h;
    for (Eigen::Index i = 0; i < levels; ++i) h += fmt("%*s", width, ("A" + std::to_string(i + 1)).c_str());
    return h + "   ";
}

inline std::string title_block(const char* title, Eigen::Index levels, int width) {
    return fmt("%-*s", static_cast<int>(levels * width + 3), title);
}

}  // namespace detail

inline std::string format_oc_table(const OperatingCharacteristics& oc, const Scenario* truth = nullptr) {
    using detail::fmt;
    const Eigen::Index I = oc.selection_pct.rows(), J = oc.selection_pct.cols();
    const int w = 7;
    std::vector<std::string> rows(static_cast<std::size_t>(J));
    for (Eigen::Index j = J - 1, r = 0; j >= 0; --j, ++r)
        rows[static_cast<std::size_t>(r)] = fmt("  B%-5d", static_cast<int>(j + 1));
    std::string title = "        ", header = "        ";
    if (truth) {
        title += detail::title_block("True pr(toxicity)", I, w) + detail::title_block("True pr(efficacy)", I, w);
        header += detail::header_block(I, w) + detail::header_block(I, w);
        detail::grid_block(rows, truth->toxicity, w, 2);
        detail::grid_block(rows, truth->efficacy, w, 2);
    }
    title += detail::title_block("Selection %", I, w) + detail::title_block("Patients", I, w) +
             detail::title_block("Admissible %", I, w);
    header += detail::header_block(I, w) + detail::header_block(I, w) + detail::header_block(I, w);
    detail::grid_block(rows, oc.selection_pct, w, 1);
    detail::grid_block(rows, oc.mean_patients, w, 1);
    detail::grid_block(rows, oc.admissible_pct, w, 1);

    std::ostringstream out;
    if (truth) out << truth->name << ", ";
    out << oc.reps << " replicates\n" << title << "\n" << header << "\n";
    for (const auto& r : rows) out << r << "\n";
    out << fmt("No selection: %.1f%%   Stopped before phase II: %.1f%%\n", oc.no_selection_pct,
               oc.early_termination_pct);
    out << fmt("Mean admissible set size: %.2f   Mean enrolled: %.1f\n", oc.mean_admissible_size, oc.mean_enrolled);
    out << fmt("Duration (months): mean %.1f, 10%% %.1f, median %.1f, 90%% %.1f\n", oc.mean_duration, oc.duration_q10,
               oc.duration_q50, oc.duration_q90);
    return out.str();
}

/// Per-combination CSV, one row per (A level, B level).
inline std::string oc_csv(const OperatingCharacteristics& oc, const Scenario* truth = nullptr) {
    using detail::fmt;
    std::ostringstream out;
    out << "a_level,b_level,";
    if (truth) out << "true_toxicity,true_efficacy,";
    out << "selection_pct,mean_patients,admissible_pct,mean_dlts\n";
    for (Eigen::Index i = 0; i < oc.selection_pct.rows(); ++i)
        for (Eigen::Index j = 0; j < oc.selection_pct.cols(); ++j) {
            out << i + 1 << "," << j + 1 << ",";
            if (truth) out << fmt("%.4f,%.4f,", truth->toxicity(i, j), truth->efficacy(i, j));
            out << fmt("%.4f,%.4f,%.4f,%.4f\n", oc.selection_pct(i, j), oc.mean_patients(i, j),
                       oc.admissible_pct(i, j), oc.mean_dlts(i, j));
        }
    return out.str();
}

inline std::string summary_csv(const OperatingCharacteristics& oc) {
    using detail::fmt;
    std::ostringstream out;
    out << "reps,no_selection_pct,early_termination_pct,mean_admissible_size,mean_enrolled,"
           "mean_duration,duration_q10,duration_q50,duration_q90\n";
    out << oc.reps
        << fmt(",%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", oc.no_selection_pct, oc.early_termination_pct,
               oc.mean_admissible_size, oc.mean_enrolled, oc.mean_duration, oc.duration_q10, oc.duration_q50,
               oc.duration_q90);
    return out.str();
}

/// One row per replicate.
inline std::string replicates_csv(const std::vector<TrialResult>& results, std::uint64_t master_seed) {
    using detail::fmt;
    std::ostringstream out;
    out << "replicate,seed,selected_a,selected_b,enrolled,admissible,duration,reason\n";
    for (std::size_t r = 0; r < results.size(); ++r) {
        const TrialResult& t = results[r];
        out << r << "," << derive_seed(master_seed, r) << ",";
        if (t.selected) out << t.selected->i + 1 << "," << t.selected->j + 1 << ",";
        else out << ",,";
        out << t.enrolled << "," << t.admissible.size() << fmt(",%.4f,", t.duration) << "\"" << t.reason << "\"\n";
    }
    return out.str();
}

inline std::string format_ar_only(const ArOnlyResult& r, const std::vector<double>& rates, RandomizationScheme scheme) {
    using detail::fmt;
    std::ostringstream out;
    out << (scheme == RandomizationScheme::MAR ? "MAR" : "FAR") << ", " << r.reps << " replicates, "
        << r.mean_probs.rows() << " patients\n";
    out << "arm  rate   mean patients  sd\n";
    for (std::size_t k = 0; k < rates.size(); ++k)
        out << fmt("%3zu  %.2f  %13.1f  %.1f\n", k + 1, rates[k], r.mean_allocation[k], r.sd_allocation[k]);
    return out.str();
}

/// Mean randomization probability used for each patient, by arm.
inline std::string trajectory_csv(const ArOnlyResult& r) {
    using detail::fmt;
    std::ostringstream out;
    out << "patient";
    for (Eigen::Index k = 0; k < r.mean_probs.cols(); ++k) out << ",arm" << k + 1;
    out << "\n";
    for (Eigen::Index t = 0; t < r.mean_probs.rows(); ++t) {
        out << t + 1;
        for (Eigen::Index k = 0; k < r.mean_probs.cols(); ++k) out << fmt(",%.6f", r.mean_probs(t, k));
        out << "\n";
    }
    return out.str();
}

}  // namespace combotrial
