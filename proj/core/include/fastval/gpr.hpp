#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fastval {

/// Diagonal jitter added before every factorization; escalated x10 on failure
/// up to kMaxJitter.
inline constexpr double kBaseJitter = 1e-10;
inline constexpr double kMaxJitter = 1e-6;

/// Upper bound on the conjugate-gradient iterations that refine the GPR weights.
inline constexpr int kRefinementIterations = 64;

struct Hyperparams {
    double length_scale = 1.0;  // l_g, standardized-input units
    double noise = 0.0;         // sigma_g, standardized-output units
};

/// Per-column affine map x -> (x - shift) / scale.
struct Standardizer {
    std::vector<double> shift;
    std::vector<double> scale;

    /// Mean / population standard deviation per column; constant columns keep scale 1.
    static Standardizer fit(const Eigen::MatrixXd& data);

    Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
    void apply(std::span<const double> in, std::span<double> out) const;

    bool operator==(const Standardizer&) const = default;
};

/// RBF kernel exp(-|x - x'|^2 / (2 l^2)).
double kernel(std::span<const double> x, std::span<const double> x2, double length_scale);

/// Log marginal likelihood of y under a zero-mean GP with kernel matrix
/// K(X, X) + (sigma_g^2 + jitter) I; no standardization is applied. Throws
/// ErrorCode::FactorizationFailure if jitter escalation cannot rescue the
/// Cholesky factorization.
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparams& hp);

/// Hyperparameter grid. An empty or {0} noise grid pins sigma_g = 0.
struct HyperSearch {
    std::vector<double> length_grid;
    std::vector<double> noise_grid;
    bool refine = true;          // one golden-section pass per axis around the grid optimum
    int refine_iterations = 12;
    std::function<void(const std::string&)> progress;

    /// l_g on 40 log-spaced points in [1e-1, 10^1.5], sigma_g pinned to 0.
    static HyperSearch length_only();
    /// As length_only() plus sigma_g in {0} U 30 log-spaced points in [1e-6, 1e-1].
    static HyperSearch with_noise();
};

/// LML over the search grid in standardized units; lml[il * noise_grid.size() + is],
/// NaN where the factorization failed.
struct LmlLandscape {
    std::vector<double> length_grid;
    std::vector<double> noise_grid;
    std::vector<double> lml;
    std::size_t best_length = 0;
    std::size_t best_noise = 0;
    std::size_t n = 0;

    double best_value() const { return lml[best_length * noise_grid.size() + best_noise]; }
    double at(std::size_t il, std::size_t is) const { return lml[il * noise_grid.size() + is]; }
};

/// Standardized training inputs; shared between models fitted on the same X.
struct TrainingInputs {
    Eigen::MatrixXd x;  // n x d, standardized, column-major
    Standardizer scaler;
};

class TrainedGpr {
public:
    struct Prediction {
        double mean = 0.0;
        double variance = 0.0;
    };

    TrainedGpr() = default;

    /// Builds a model at fixed hyperparameters from standardized data.
    TrainedGpr(std::shared_ptr<const TrainingInputs> inputs, Eigen::VectorXd y_std, double y_shift,
               double y_scale, const Hyperparams& hp, std::string target = {});

    Prediction predict(std::span<const double> x) const;
    double predict_mean(std::span<const double> x) const;

    /// Rows of `queries` are raw input vectors.
    std::vector<double> predict_mean_batch(const Eigen::MatrixXd& queries) const;
    std::vector<Prediction> predict_batch(const Eigen::MatrixXd& queries) const;

    const Hyperparams& hyperparams() const noexcept { return hp_; }
    double jitter() const noexcept { return jitter_; }
    std::size_t n_train() const noexcept { return static_cast<std::size_t>(y_std_.size()); }
    std::size_t dim() const noexcept { return inputs_ ? static_cast<std::size_t>(inputs_->x.cols()) : 0; }
    const std::string& target() const noexcept { return target_; }
    const TrainingInputs& inputs() const { return *inputs_; }
    const std::shared_ptr<const TrainingInputs>& shared_inputs() const noexcept { return inputs_; }
    const Eigen::VectorXd& y_standardized() const noexcept { return y_std_; }
    const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
    double y_shift() const noexcept { return y_shift_; }
    double y_scale() const noexcept { return y_scale_; }

    /// Binary file tagged "FASTGPR" with a format version; the factorization is
    /// rebuilt on load.
    void save(const std::filesystem::path& path) const;
    static TrainedGpr load(const std::filesystem::path& path);

    /// Points this model at `other`'s inputs when they are equal, so both
    /// share one copy. Returns false (and changes nothing) otherwise.
    bool share_inputs_with(const TrainedGpr& other);

    /// Same training data, scalers, hyperparameters and weights.
    bool same_state(const TrainedGpr& other) const;

private:
    friend Eigen::MatrixXd predict_means(std::span<const TrainedGpr* const> models,
                                         const Eigen::MatrixXd& queries);

    Eigen::VectorXd solve_factor(const Eigen::VectorXd& b) const;
    Eigen::VectorXd refined_weights(const Eigen::MatrixXd& gram) const;
    void standardize_query(std::span<const double> x, std::span<double> out) const;
    void kernel_row(const Eigen::ArrayXd& sq_dist, Eigen::ArrayXd& out) const;

    std::shared_ptr<const TrainingInputs> inputs_;
    Eigen::VectorXd y_std_;
    Eigen::VectorXd alpha_;
    std::shared_ptr<const Eigen::MatrixXd> factor_;  // lower Cholesky factor
    Hyperparams hp_;
    double jitter_ = kBaseJitter;
    double y_shift_ = 0.0;
    double y_scale_ = 1.0;
    std::string target_;
};

/// Means of several models on the same queries (one column per model).
/// Models trained on identical inputs share the distance computation; each
/// column is bitwise equal to that model's predict_mean_batch.
Eigen::MatrixXd predict_means(std::span<const TrainedGpr* const> models, const Eigen::MatrixXd& queries);

struct FitResult {
    TrainedGpr model;
    LmlLandscape landscape;
    Hyperparams selected;
    double selected_lml = 0.0;
};

/// Standardizes X and y, scans the LML grid, optionally refines, and returns
/// the model at the best hyperparameters. Throws ErrorCode::DegenerateData when
/// all rows of X coincide.
FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HyperSearch& search,
              const std::string& target = {});

/// One fit per column of Y. The grid factorizations are shared across targets.
std::vector<FitResult> fit_many(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const HyperSearch& search,
                                const std::vector<std::string>& targets = {});

/// Pairwise squared distances and the RBF Gram matrix, as used by fitting.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X);
Eigen::MatrixXd gram_from_distances(const Eigen::MatrixXd& sq_dist, double length_scale);

}  // namespace fastval
