#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace scanfer {

class FerModel;
struct ImageSet;

inline constexpr int kClasses = 7;

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kClasses>, kClasses> counts{};

    void add(int truth, int predicted);
    [[nodiscard]] std::uint64_t total() const;
    [[nodiscard]] std::uint64_t row_sum(int c) const;
    [[nodiscard]] std::uint64_t col_sum(int c) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted);

/// Fraction of correct predictions. Rejects an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct F1Scores {
    std::array<double, kClasses> precision{};
    std::array<double, kClasses> recall{};
    std::array<double, kClasses> f1{};
    double macro_f1 = 0.0;

    friend bool operator==(const F1Scores&, const F1Scores&) = default;
};

/// Per-class precision/recall/F1 with 0/0 taken as 0, plus the unweighted
/// mean of F1 over all seven classes.
F1Scores f1_scores(const ConfusionMatrix& cm);

/// 0.67 * F1 + 0.33 * accuracy. Both inputs must lie in [0, 1].
double overall_score(double f1, double acc);

struct EvalReport {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    F1Scores scores;
    double macro_f1 = 0.0;
    double overall = 0.0;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport make_report(const ConfusionMatrix& cm);
EvalReport evaluate(FerModel& model, const ImageSet& data, std::size_t batch_size = 32);

/// Multi-line `key=value` text.
std::string format_report(const EvalReport& report);
/// One comma-separated line: n, accuracy, macro_f1, overall, precision[0..6],
/// recall[0..6], f1[0..6], then the 49 confusion counts row-major.
std::string format_report_record(const EvalReport& report);

}  // namespace scanfer
