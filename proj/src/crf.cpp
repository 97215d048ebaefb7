#include "msdc/crf.hpp"

#include <cmath>
#include <limits>

#include "msdc/errors.hpp"

namespace msdc {

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) sum += std::exp(v(i) - m);
    return m + std::log(sum);
}

void check_labels(const std::vector<int>& labels, Eigen::Index q, int num_states) {
    if (static_cast<Eigen::Index>(labels.size()) != q) {
        throw DataError("crf: label sequence length does not match emissions");
    }
    for (int l : labels) {
        if (l < 0 || l >= num_states) {
            throw DataError("crf: label " + std::to_string(l) + " out of range [0, " +
                            std::to_string(num_states) + ")");
        }
    }
}

// alpha(t, j) = log sum over prefixes ending in state j at position t.
Eigen::MatrixXd forward_table(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
    const Eigen::Index q = emissions.rows();
    const Eigen::Index m = emissions.cols();
    Eigen::MatrixXd alpha(q, m);
    alpha.row(0) = crf.start.transpose() + emissions.row(0);
    Eigen::VectorXd work(m);
    for (Eigen::Index t = 1; t < q; ++t) {
        for (Eigen::Index j = 0; j < m; ++j) {
            work = alpha.row(t - 1).transpose() + crf.transition.col(j);
            alpha(t, j) = emissions(t, j) + log_sum_exp(work);
        }
    }
    return alpha;
}

// beta(t, j) = log sum over suffixes starting in state j at position t
// (the emission at position t excluded, the stop score included).
Eigen::MatrixXd backward_table(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
    const Eigen::Index q = emissions.rows();
    const Eigen::Index m = emissions.cols();
    Eigen::MatrixXd beta(q, m);
    beta.row(q - 1) = crf.stop.transpose();
    Eigen::VectorXd work(m);
    for (Eigen::Index t = q - 2; t >= 0; --t) {
        for (Eigen::Index j = 0; j < m; ++j) {
            work = crf.transition.row(j).transpose() + emissions.row(t + 1).transpose() +
                   beta.row(t + 1).transpose();
            beta(t, j) = log_sum_exp(work);
        }
    }
    return beta;
}

}  // namespace

CrfParams CrfParams::zeros(int num_states) {
    CrfParams p;
    p.transition = Eigen::MatrixXd::Zero(num_states, num_states);
    p.start = Eigen::VectorXd::Zero(num_states);
    p.stop = Eigen::VectorXd::Zero(num_states);
    return p;
}

void CrfParams::validate(int expected_states) const {
    if (transition.rows() != expected_states || transition.cols() != expected_states ||
        start.size() != expected_states || stop.size() != expected_states) {
        throw DataError("CrfParams: shape mismatch against M=" + std::to_string(expected_states));
    }
    if (!transition.allFinite() || !start.allFinite() || !stop.allFinite()) {
        throw NumericError("CrfParams: non-finite scores");
    }
}

double sequence_score(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                      const std::vector<int>& labels) {
    const Eigen::Index q = emissions.rows();
    if (q < 1) {
        throw DataError("sequence_score: empty emissions");
    }
    check_labels(labels, q, static_cast<int>(emissions.cols()));
    double score = crf.start(labels[0]) + emissions(0, labels[0]);
    for (Eigen::Index t = 1; t < q; ++t) {
        score += crf.transition(labels[t - 1], labels[t]) + emissions(t, labels[t]);
    }
    score += crf.stop(labels[q - 1]);
    return score;
}

double log_partition(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
    const Eigen::Index q = emissions.rows();
    if (q < 1) {
        throw DataError("log_partition: empty emissions");
    }
    const Eigen::MatrixXd alpha = forward_table(emissions, crf);
    Eigen::VectorXd last = alpha.row(q - 1).transpose() + crf.stop;
    return log_sum_exp(last);
}

double loss_crf(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                const std::vector<int>& labels) {
    return log_partition(emissions, crf) - sequence_score(emissions, crf, labels);
}

double loss_crf_with_gradients(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                               const std::vector<int>& labels, CrfGradients& grads) {
    const Eigen::Index q = emissions.rows();
    const Eigen::Index m = emissions.cols();
    check_labels(labels, q, static_cast<int>(m));

    const Eigen::MatrixXd alpha = forward_table(emissions, crf);
    const Eigen::MatrixXd beta = backward_table(emissions, crf);
    Eigen::VectorXd last = alpha.row(q - 1).transpose() + crf.stop;
    const double log_z = log_sum_exp(last);

    grads.emissions.setZero(q, m);
    grads.transition.setZero(m, m);
    grads.start.setZero(m);
    grads.stop.setZero(m);

    // d loss / d emission(t, j) = posterior marginal - observed count.
    for (Eigen::Index t = 0; t < q; ++t) {
        for (Eigen::Index j = 0; j < m; ++j) {
            grads.emissions(t, j) = std::exp(alpha(t, j) + beta(t, j) - log_z);
        }
        grads.emissions(t, labels[t]) -= 1.0;
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        grads.start(j) = std::exp(alpha(0, j) + beta(0, j) - log_z);
        grads.stop(j) = std::exp(alpha(q - 1, j) + beta(q - 1, j) - log_z);
    }
    grads.start(labels[0]) -= 1.0;
    grads.stop(labels[q - 1]) -= 1.0;

    // Pairwise marginals for the transition gradient.
    for (Eigen::Index t = 0; t + 1 < q; ++t) {
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) {
                grads.transition(a, b) += std::exp(alpha(t, a) + crf.transition(a, b) +
                                                   emissions(t + 1, b) + beta(t + 1, b) - log_z);
            }
        }
        grads.transition(labels[t], labels[t + 1]) -= 1.0;
    }

    return log_z - sequence_score(emissions, crf, labels);
}

std::pair<std::vector<int>, double> viterbi(const Eigen::MatrixXd& emissions,
                                            const CrfParams& crf) {
    const Eigen::Index q = emissions.rows();
    const Eigen::Index m = emissions.cols();
    if (q < 1) {
        throw DataError("viterbi: empty emissions");
    }
    // Suffix DP so reconstruction proceeds left to right; picking the
    // lowest maximizing state at each step yields the lexicographically
    // smallest optimal sequence.
    Eigen::MatrixXd suffix(q, m);  // suffix(t, j): best completion from state j at t
    suffix.row(q - 1) = emissions.row(q - 1) + crf.stop.transpose();
    for (Eigen::Index t = q - 2; t >= 0; --t) {
        for (Eigen::Index j = 0; j < m; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            for (Eigen::Index k = 0; k < m; ++k) {
                best = std::max(best, crf.transition(j, k) + suffix(t + 1, k));
            }
            suffix(t, j) = emissions(t, j) + best;
        }
    }

    std::vector<int> path(static_cast<std::size_t>(q));
    double best_total = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
        const double s = crf.start(j) + suffix(0, j);
        if (s > best_total) {
            best_total = s;
            path[0] = static_cast<int>(j);
        }
    }
    for (Eigen::Index t = 1; t < q; ++t) {
        const int prev = path[t - 1];
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < m; ++k) {
            const double s = crf.transition(prev, k) + suffix(t, k);
            if (s > best) {
                best = s;
                path[t] = static_cast<int>(k);
            }
        }
    }
    return {std::move(path), best_total};
}

}  // namespace msdc
