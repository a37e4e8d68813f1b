#include <algorithm>
#include <cmath>
#include <numeric>

#include "crux/error.hpp"
#include "crux/metrics.hpp"

namespace crux {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw UsageError("correlation inputs differ in length: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    if (x.size() < 2) throw UsageError("correlation needs at least 2 observations");
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx = x[i] - x[j];
            double dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) {
                ++tied_x;
                ++tied_y;
            } else if (dx == 0.0) {
                ++tied_x;
            } else if (dy == 0.0) {
                ++tied_y;
            } else if ((dx > 0) == (dy > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const auto pairs = static_cast<long long>(n * (n - 1) / 2);
    const auto nx = pairs - tied_x;
    const auto ny = pairs - tied_y;
    if (nx == 0 || ny == 0) throw UndefinedMetric("kendall tau is undefined for a constant input");
    return static_cast<double>(concordant - discordant) / std::sqrt(static_cast<double>(nx) * static_cast<double>(ny));
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const auto n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("correlation is undefined for a constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson_r(rx, ry);
}

double fleiss_kappa(const std::vector<std::vector<int>>& labels, int categories) {
    if (labels.size() < 2) throw UsageError("fleiss kappa needs at least 2 items");
    if (categories < 2) throw UsageError("fleiss kappa needs at least 2 categories");
    const std::size_t raters = labels.front().size();
    if (raters < 2) throw UsageError("fleiss kappa needs at least 2 raters");
    std::vector<double> totals(static_cast<std::size_t>(categories), 0.0);
    double p_bar = 0.0;
    for (const auto& item : labels) {
        if (item.size() != raters) throw ValidationError("fleiss kappa: every item needs the same number of ratings");
        std::vector<double> counts(static_cast<std::size_t>(categories), 0.0);
        for (int l : item) {
            if (l < 0 || l >= categories) throw ValidationError("fleiss kappa: label outside category range");
            counts[static_cast<std::size_t>(l)] += 1.0;
        }
        double agree = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            agree += counts[c] * (counts[c] - 1.0);
            totals[c] += counts[c];
        }
        p_bar += agree / (static_cast<double>(raters) * static_cast<double>(raters - 1));
    }
    const auto n_items = static_cast<double>(labels.size());
    p_bar /= n_items;
    double p_e = 0.0;
    for (double t : totals) {
        double p = t / (n_items * static_cast<double>(raters));
        p_e += p * p;
    }
    if (p_e >= 1.0) return 1.0;
    return (p_bar - p_e) / (1.0 - p_e);
}

JudgeAlignment judge_vs_human(std::span<const int> llm_ratings, std::span<const int> human_ratings, int eta) {
    if (llm_ratings.empty()) throw UsageError("judge_vs_human needs at least one pair");
    if (llm_ratings.size() != human_ratings.size()) throw UsageError("judge_vs_human: rating lists differ in length");
    JudgeAlignment out;
    out.n = llm_ratings.size();
    for (std::size_t i = 0; i < llm_ratings.size(); ++i) {
        bool llm = llm_ratings[i] >= eta;
        bool human = human_ratings[i] >= eta;
        auto& pos = llm ? out.answerable : out.unanswerable;
        auto& other = llm ? out.unanswerable : out.answerable;
        if (llm == human) {
            ++pos.true_positive;
        } else {
            ++pos.false_positive;
            ++other.false_negative;
        }
    }
    for (auto* c : {&out.answerable, &out.unanswerable}) {
        auto tp = static_cast<double>(c->true_positive);
        if (c->true_positive + c->false_positive > 0)
            c->precision = tp / static_cast<double>(c->true_positive + c->false_positive);
        if (c->true_positive + c->false_negative > 0)
            c->recall = tp / static_cast<double>(c->true_positive + c->false_negative);
    }
    return out;
}

}  // namespace crux
