#pragma once

#include <Eigen/Dense>
#include <vector>

namespace msdc {

/// Linear-chain CRF scores. transition(a, b) is the score of moving from
/// state a to state b between adjacent timesteps.
struct CrfParams {
    Eigen::MatrixXd transition;  // M x M
    Eigen::VectorXd start;       // M
    Eigen::VectorXd stop;        // M

    static CrfParams zeros(int num_states);
    int num_states() const { return static_cast<int>(start.size()); }
    void validate(int num_states) const;
};

/// start[l0] + sum_t emissions(t, l_t) + sum_t transition(l_t, l_{t+1}) + stop[l_last].
double sequence_score(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                      const std::vector<int>& labels);

/// log sum over all M^q label sequences of exp(sequence_score), computed by
/// the forward recursion in log-space (max-shift log-sum-exp).
double log_partition(const Eigen::MatrixXd& emissions, const CrfParams& crf);

/// Negative log-likelihood of the labels: log_partition - sequence_score.
double loss_crf(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                const std::vector<int>& labels);

struct CrfGradients {
    Eigen::MatrixXd emissions;   // q x M
    Eigen::MatrixXd transition;  // M x M
    Eigen::VectorXd start;
    Eigen::VectorXd stop;
};

/// loss_crf together with its exact gradients w.r.t. emissions and all CRF
/// parameters (posterior marginals minus empirical counts, via
/// forward-backward).
double loss_crf_with_gradients(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                               const std::vector<int>& labels, CrfGradients& grads);

/// Highest-scoring label sequence; among ties the lexicographically
/// smallest sequence (lower state indices first-position-first) wins.
std::pair<std::vector<int>, double> viterbi(const Eigen::MatrixXd& emissions,
                                            const CrfParams& crf);

}  // namespace msdc
