#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "msdc/power_series.hpp"
#include "msdc/state_extraction.hpp"

namespace msdc {

/// Finite-state-machine appliance: per-state Gaussian power and a Markov
/// chain over the states. State means should be declared in ascending
/// order so generated labels line up with extracted (sorted) centers.
struct ApplianceFsm {
    std::string name;
    std::vector<double> means;              // watts, one per state
    std::vector<double> stds;               // watts, >= 0
    Eigen::MatrixXd transition;             // M x M, rows sum to 1
    Eigen::VectorXd initial;                // M, sums to 1

    int num_states() const { return static_cast<int>(means.size()); }
    void validate() const;

    /// Stationary distribution of the chain (power iteration).
    Eigen::VectorXd stationary() const;
};

enum class BaseLoadProfile { constant, sinusoidal };

/// Out-of-scope load z_t plus measurement noise epsilon_t.
struct AggregationNoiseSpec {
    double base_load_watts = 0.0;
    BaseLoadProfile profile = BaseLoadProfile::constant;
    double profile_period_samples = 1200.0;   // sinusoidal profile period
    double profile_amplitude_fraction = 0.2;  // relative swing of the sinusoid
    double noise_std_watts = 0.0;

    double base_load_at(std::size_t t) const;
};

/// Samples the Markov chain and per-state Gaussian power; generated watts
/// are clamped at 0 (the verification operations below use the unclamped
/// model to match the theory exactly).
std::pair<PowerSeries, StateSequence> simulate_appliance(const ApplianceFsm& fsm, std::size_t length,
                                                         double interval_seconds,
                                                         std::uint64_t seed);

/// x_t = sum_i y_t^i + z_t + Normal(0, noise_std), clamped at 0.
PowerSeries aggregate(const std::vector<PowerSeries>& appliances, const AggregationNoiseSpec& noise,
                      std::uint64_t seed);

/// Monte Carlo setup shared by the theory checks. Requires sum p_s = 1 and
/// (for the theorem/corollary) sigma_s <= sigma for every state.
struct VarianceExperimentSpec {
    std::vector<double> probs;   // p_s
    std::vector<double> means;   // mu_s
    std::vector<double> stds;    // sigma_s
    double aggregate_std = 0.0;  // sigma
    std::size_t samples = 100000;
    std::uint64_t seed = 1;

    int num_states() const { return static_cast<int>(probs.size()); }
    void validate(bool require_assumption2) const;
};

struct Fact1Report {
    double empirical_mean = 0.0, expected_mean = 0.0;
    double empirical_var = 0.0, expected_var = 0.0;  // expected: sum (p_s sigma_s)^2
    bool pass = false;
};

/// Draws y = sum_s p_s c_s with c_s ~ N(mu_s, sigma_s^2) and checks the
/// empirical mean/variance against the closed forms.
Fact1Report verify_fact1(const VarianceExperimentSpec& spec, double mean_tol_watts = 0.5,
                         double var_tol_rel = 0.05);

struct Theorem1Report {
    double multi_mean = 0.0, single_mean = 0.0;
    double multi_var = 0.0, single_var = 0.0;
    double empirical_ratio = 0.0;  // multi_var / single_var
    double analytic_ratio = 0.0;   // sum p_s^2 when sigma_s == sigma
    bool pass = false;
};

/// Compares the multi-state estimator y_bar = sum_s p_s c_s against the
/// single-state comparator y_tilde ~ N(sum p_s mu_s, sigma^2). Throws
/// UsageError when Assumption 2 (sigma_s <= sigma) is violated.
Theorem1Report verify_theorem1(const VarianceExperimentSpec& spec, double mean_tol_watts = 0.5,
                               double var_tol_rel = 0.05);

struct CorollaryReport {
    double multi_prob = 0.0, single_prob = 0.0;
    double multi_closed_form = 0.0, single_closed_form = 0.0;
    double monte_carlo_se = 0.0;
    bool pass = false;
};

/// Empirical Pr(|y - mu| < xi) for both estimators; passes when the
/// multi-state probability exceeds the single-state one by more than
/// three Monte Carlo standard errors.
CorollaryReport verify_corollary(const VarianceExperimentSpec& spec, double xi);

}  // namespace msdc
