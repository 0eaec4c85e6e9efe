#include "scanfer/metrics.hpp"

#include "scanfer/data.hpp"
#include "scanfer/model.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace scanfer {

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= kClasses || predicted < 0 || predicted >= kClasses)
        throw std::out_of_range("confusion matrix: class index outside [0, 6]");
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(int c) const {
    const auto& row = counts[static_cast<std::size_t>(c)];
    return std::accumulate(row.begin(), row.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::col_sum(int c) const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[static_cast<std::size_t>(c)];
    return t;
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
    std::uint64_t correct = 0;
    for (int c = 0; c < kClasses; ++c) correct += cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    return static_cast<double>(correct) / static_cast<double>(total);
}

F1Scores f1_scores(const ConfusionMatrix& cm) {
    F1Scores s;
    auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    double sum = 0.0;
    for (int c = 0; c < kClasses; ++c) {
        const auto i = static_cast<std::size_t>(c);
        const double tp = static_cast<double>(cm.counts[i][i]);
        s.precision[i] = ratio(tp, static_cast<double>(cm.col_sum(c)));
        s.recall[i] = ratio(tp, static_cast<double>(cm.row_sum(c)));
        s.f1[i] = ratio(2.0 * s.precision[i] * s.recall[i], s.precision[i] + s.recall[i]);
        sum += s.f1[i];
    }
    s.macro_f1 = sum / kClasses;
    return s;
}

double overall_score(double f1, double acc) {
    if (!(f1 >= 0.0 && f1 <= 1.0) || !(acc >= 0.0 && acc <= 1.0))
        throw std::out_of_range("overall_score: inputs must lie in [0, 1]");
    return 0.67 * f1 + 0.33 * acc;
}

EvalReport make_report(const ConfusionMatrix& cm) {
    EvalReport r;
    r.confusion = cm;
    r.accuracy = accuracy(cm);
    r.scores = f1_scores(cm);
    r.macro_f1 = r.scores.macro_f1;
    r.overall = overall_score(r.macro_f1, r.accuracy);
    return r;
}

EvalReport evaluate(FerModel& model, const ImageSet& data, std::size_t batch_size) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    if (batch_size == 0) batch_size = 1;
    ConfusionMatrix cm;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
        const auto pred = model.predict_batch(data.batch(idx));
        for (std::size_t j = 0; j < idx.size(); ++j) cm.add(data.labels[idx[j]], pred[j]);
    }
    return make_report(cm);
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_report(const EvalReport& r) {
    std::string out;
    out += "samples=" + std::to_string(r.confusion.total()) + "\n";
    out += "accuracy=" + num(r.accuracy) + "\n";
    out += "macro_f1=" + num(r.macro_f1) + "\n";
    out += "overall=" + num(r.overall) + "\n";
    for (int c = 0; c < kClasses; ++c) {
        const auto i = static_cast<std::size_t>(c);
        const std::string name(expression_name(c));
        out += "precision." + name + "=" + num(r.scores.precision[i]) + "\n";
        out += "recall." + name + "=" + num(r.scores.recall[i]) + "\n";
        out += "f1." + name + "=" + num(r.scores.f1[i]) + "\n";
    }
    for (int c = 0; c < kClasses; ++c) {
        out += "confusion." + std::string(expression_name(c)) + "=";
        for (int p = 0; p < kClasses; ++p) {
            if (p) out += ",";
            out += std::to_string(r.confusion.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)]);
        }
        out += "\n";
    }
    return out;
}

std::string format_report_record(const EvalReport& r) {
    std::string out = std::to_string(r.confusion.total());
    out += "," + num(r.accuracy) + "," + num(r.macro_f1) + "," + num(r.overall);
    for (double v : r.scores.precision) out += "," + num(v);
    for (double v : r.scores.recall) out += "," + num(v);
    for (double v : r.scores.f1) out += "," + num(v);
    for (const auto& row : r.confusion.counts)
        for (auto v : row) out += "," + std::to_string(v);
    return out;
}

}  // namespace scanfer
