#include "fastval/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "detail/kernel_exp.hpp"
#include "fastval/errors.hpp"

namespace fastval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMagic[8] = {'F', 'A', 'S', 'T', 'G', 'P', 'R', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<double> log_space(double lo_exp, double hi_exp, int count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double e = lo_exp + (hi_exp - lo_exp) * i / (count - 1);
        out[static_cast<std::size_t>(i)] = std::pow(10.0, e);
    }
    return out;
}

// Squared distances from one standardized query to every training row. The
// same expression builds the Gram matrix, so both paths round identically.
void squared_distances_to(const Eigen::MatrixXd& x, std::span<const double> q, Eigen::ArrayXd& out) {
    out = (x.col(0).array() - q[0]).square();
    for (Eigen::Index k = 1; k < x.cols(); ++k) out += (x.col(k).array() - q[static_cast<std::size_t>(k)]).square();
}

// Cholesky of gram + (noise^2 + jitter) I into `work`, escalating the jitter.
std::optional<double> factorize(const Eigen::MatrixXd& gram, double noise, Eigen::MatrixXd& work) {
    double jitter = kBaseJitter;
    for (int attempt = 0; attempt < 5; ++attempt, jitter *= 10.0) {
        work = gram;
        work.diagonal().array() += noise * noise + jitter;
        Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);
        if (llt.info() == Eigen::Success) return jitter;
    }
    return std::nullopt;
}

double lml_from_factor(const Eigen::MatrixXd& factor, const Eigen::VectorXd& y) {
    const Eigen::VectorXd z = factor.triangularView<Eigen::Lower>().solve(y);
    const double log_det_half = factor.diagonal().array().log().sum();
    const double n = static_cast<double>(y.size());
    return -0.5 * z.squaredNorm() - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct TargetScale {
    double shift = 0.0;
    double scale = 1.0;
};

TargetScale fit_target_scale(const Eigen::VectorXd& y) {
    TargetScale s;
    s.shift = y.mean();
    const double var = (y.array() - s.shift).square().mean();
    s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

bool all_rows_equal(const Eigen::MatrixXd& X) {
    for (Eigen::Index i = 1; i < X.rows(); ++i) {
        if (X.row(i) != X.row(0)) return false;
    }
    return true;
}

double golden_max(const std::function<double(double)>& g, double a, double b, int iterations,
                  double& best_u, double& best_val) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto eval = [&](double u) {
        double v = g(u);
        if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
        if (v > best_val) {
            best_val = v;
            best_u = u;
        }
        return v;
    };
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = eval(c);
    double fd = eval(d);
    for (int i = 0; i < iterations; ++i) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    return best_val;
}

void write_raw(std::ostream& os, const void* data, std::size_t bytes) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

template <typename T>
void write_value(std::ostream& os, T v) {
    write_raw(os, &v, sizeof(T));
}

void read_raw(std::istream& is, void* data, std::size_t bytes) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (!is) fail(ErrorCode::Io, "truncated GPR model file");
}

template <typename T>
T read_value(std::istream& is) {
    T v{};
    read_raw(is, &v, sizeof(T));
    return v;
}

}  // namespace

Standardizer Standardizer::fit(const Eigen::MatrixXd& data) {
    Standardizer s;
    const auto d = static_cast<std::size_t>(data.cols());
    s.shift.resize(d);
    s.scale.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto col = data.col(static_cast<Eigen::Index>(k)).array();
        const double mean = col.mean();
        const double var = (col - mean).square().mean();
        s.shift[k] = mean;
        s.scale[k] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& data) const {
    if (static_cast<std::size_t>(data.cols()) != shift.size()) {
        fail(ErrorCode::DimensionMismatch, "standardizer dimension mismatch");
    }
    Eigen::MatrixXd out(data.rows(), data.cols());
    for (Eigen::Index k = 0; k < data.cols(); ++k) {
        const auto u = static_cast<std::size_t>(k);
        out.col(k) = (data.col(k).array() - shift[u]) / scale[u];
    }
    return out;
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != shift.size() || out.size() != shift.size()) {
        fail(ErrorCode::DimensionMismatch, "standardizer dimension mismatch");
    }
    for (std::size_t k = 0; k < in.size(); ++k) out[k] = (in[k] - shift[k]) / scale[k];
}

double kernel(std::span<const double> x, std::span<const double> x2, double length_scale) {
    if (x.size() != x2.size()) fail(ErrorCode::DimensionMismatch, "kernel inputs differ in dimension");
    if (!(length_scale > 0.0)) fail(ErrorCode::InvalidParameter, "length scale must be > 0");
    double sq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - x2[k]) * (x[k] - x2[k]);
    return std::exp(-sq / (2.0 * length_scale * length_scale));
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd out(n, n);
    Eigen::ArrayXd col;
    std::vector<double> q(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < X.cols(); ++k) q[static_cast<std::size_t>(k)] = X(j, k);
        squared_distances_to(X, q, col);
        out.col(j) = col.matrix();
    }
    return out;
}

Eigen::MatrixXd gram_from_distances(const Eigen::MatrixXd& sq_dist, double length_scale) {
    const double c = -0.5 / (length_scale * length_scale);
    Eigen::MatrixXd out(sq_dist.rows(), sq_dist.cols());
    detail::scaled_exp(sq_dist.data(), c, out.data(), static_cast<std::size_t>(sq_dist.size()));
    return out;
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparams& hp) {
    if (X.rows() != y.size() || X.rows() < 1) fail(ErrorCode::DimensionMismatch, "X and y sizes differ");
    if (!(hp.length_scale > 0.0) || !(hp.noise >= 0.0)) fail(ErrorCode::InvalidParameter, "invalid hyperparameters");
    const Eigen::MatrixXd gram = gram_from_distances(squared_distances(X), hp.length_scale);
    Eigen::MatrixXd work;
    if (!factorize(gram, hp.noise, work)) {
        fail(ErrorCode::FactorizationFailure, "kernel matrix is not positive definite even with maximal jitter");
    }
    return lml_from_factor(work, y);
}

HyperSearch HyperSearch::length_only() {
    HyperSearch s;
    s.length_grid = log_space(-1.0, 1.5, 40);
    s.noise_grid = {0.0};
    return s;
}

HyperSearch HyperSearch::with_noise() {
    HyperSearch s = length_only();
    const auto positive = log_space(-6.0, -1.0, 30);
    s.noise_grid.insert(s.noise_grid.end(), positive.begin(), positive.end());
    return s;
}

TrainedGpr::TrainedGpr(std::shared_ptr<const TrainingInputs> inputs, Eigen::VectorXd y_std, double y_shift,
                       double y_scale, const Hyperparams& hp, std::string target)
    : inputs_(std::move(inputs)), y_std_(std::move(y_std)), hp_(hp), y_shift_(y_shift), y_scale_(y_scale),
      target_(std::move(target)) {
    if (!inputs_ || inputs_->x.rows() != y_std_.size()) fail(ErrorCode::DimensionMismatch, "training sizes differ");
    const Eigen::MatrixXd gram = gram_from_distances(squared_distances(inputs_->x), hp_.length_scale);
    auto factor = std::make_shared<Eigen::MatrixXd>();
    const auto jitter = factorize(gram, hp_.noise, *factor);
    if (!jitter) fail(ErrorCode::FactorizationFailure, "kernel matrix is not positive definite even with maximal jitter");
    jitter_ = *jitter;
    factor_ = std::move(factor);
    alpha_ = refined_weights(gram);
}

Eigen::VectorXd TrainedGpr::solve_factor(const Eigen::VectorXd& b) const {
    const Eigen::MatrixXd& L = *factor_;
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(b);
    return L.triangularView<Eigen::Lower>().transpose().solve(z);
}

// The jittered factor solves (K + (sigma^2 + jitter) I) a = y. Conjugate
// gradients on K + sigma^2 I, preconditioned by that factor, remove the jitter
// bias wherever the spectrum of K allows, so a noiseless fit interpolates its
// training targets. The iterate with the smallest max-norm residual is kept.
Eigen::VectorXd TrainedGpr::refined_weights(const Eigen::MatrixXd& gram) const {
    const double s2 = hp_.noise * hp_.noise;
    auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return gram * v + s2 * v; };
    Eigen::VectorXd a = solve_factor(y_std_);
    Eigen::VectorXd r = y_std_ - apply(a);
    Eigen::VectorXd best = a;
    double best_norm = r.lpNorm<Eigen::Infinity>();
    const double target = 1e-15 * std::max(1.0, y_std_.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd z = solve_factor(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < kRefinementIterations && best_norm > target; ++it) {
        const Eigen::VectorXd ap = apply(p);
        const double curvature = p.dot(ap);
        if (!(curvature > 0.0) || !(rz > 0.0)) break;
        const double step = rz / curvature;
        a += step * p;
        r = y_std_ - apply(a);  // true residual; the recursive update drifts
        const double norm = r.lpNorm<Eigen::Infinity>();
        if (norm < best_norm) {
            best = a;
            best_norm = norm;
        }
        z = solve_factor(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    return best;
}

void TrainedGpr::standardize_query(std::span<const double> x, std::span<double> out) const {
    if (x.size() != dim()) fail(ErrorCode::DimensionMismatch, "query dimension differs from training inputs");
    inputs_->scaler.apply(x, out);
}

void TrainedGpr::kernel_row(const Eigen::ArrayXd& sq_dist, Eigen::ArrayXd& out) const {
    const double c = -0.5 / (hp_.length_scale * hp_.length_scale);
    out.resize(sq_dist.size());
    detail::scaled_exp(sq_dist.data(), c, out.data(), static_cast<std::size_t>(sq_dist.size()));
}

TrainedGpr::Prediction TrainedGpr::predict(std::span<const double> x) const {
    std::vector<double> q(dim());
    standardize_query(x, q);
    Eigen::ArrayXd sq, k;
    squared_distances_to(inputs_->x, q, sq);
    kernel_row(sq, k);
    const double mean_std = k.matrix().dot(alpha_);
    const Eigen::VectorXd v = factor_->triangularView<Eigen::Lower>().solve(k.matrix());
    const double var_std = std::max(0.0, 1.0 - v.squaredNorm());
    return {y_shift_ + y_scale_ * mean_std, y_scale_ * y_scale_ * var_std};
}

double TrainedGpr::predict_mean(std::span<const double> x) const {
    std::vector<double> q(dim());
    standardize_query(x, q);
    Eigen::ArrayXd sq, k;
    squared_distances_to(inputs_->x, q, sq);
    kernel_row(sq, k);
    return y_shift_ + y_scale_ * k.matrix().dot(alpha_);
}

std::vector<double> TrainedGpr::predict_mean_batch(const Eigen::MatrixXd& queries) const {
    const TrainedGpr* self = this;
    const Eigen::MatrixXd means = predict_means(std::span<const TrainedGpr* const>(&self, 1), queries);
    return {means.data(), means.data() + means.size()};
}

std::vector<TrainedGpr::Prediction> TrainedGpr::predict_batch(const Eigen::MatrixXd& queries) const {
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(queries.rows()));
    std::vector<double> row(static_cast<std::size_t>(queries.cols()));
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        for (Eigen::Index k = 0; k < queries.cols(); ++k) row[static_cast<std::size_t>(k)] = queries(i, k);
        out.push_back(predict(row));
    }
    return out;
}

Eigen::MatrixXd predict_means(std::span<const TrainedGpr* const> models, const Eigen::MatrixXd& queries) {
    Eigen::MatrixXd out(queries.rows(), static_cast<Eigen::Index>(models.size()));
    if (models.empty()) return out;
    const TrainedGpr& first = *models.front();
    bool shared = true;
    for (const TrainedGpr* m : models) {
        if (static_cast<std::size_t>(queries.cols()) != m->dim()) {
            fail(ErrorCode::DimensionMismatch, "query dimension differs from training inputs");
        }
        if (m->inputs_ != first.inputs_ &&
            (m->inputs_->scaler != first.inputs_->scaler || m->inputs_->x != first.inputs_->x)) {
            shared = false;
        }
    }

    std::vector<double> raw(static_cast<std::size_t>(queries.cols()));
    std::vector<double> q(raw.size());
    Eigen::ArrayXd sq, k;
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        for (Eigen::Index c = 0; c < queries.cols(); ++c) raw[static_cast<std::size_t>(c)] = queries(i, c);
        for (std::size_t t = 0; t < models.size(); ++t) {
            const TrainedGpr& m = *models[t];
            if (t == 0 || !shared) {
                m.standardize_query(raw, q);
                squared_distances_to(m.inputs_->x, q, sq);
            }
            m.kernel_row(sq, k);
            out(i, static_cast<Eigen::Index>(t)) = m.y_shift_ + m.y_scale_ * k.matrix().dot(m.alpha_);
        }
    }
    return out;
}

void TrainedGpr::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    const auto n = static_cast<std::uint32_t>(n_train());
    const auto d = static_cast<std::uint32_t>(dim());
    write_raw(os, kMagic, sizeof(kMagic));
    write_value(os, kFormatVersion);
    write_value(os, n);
    write_value(os, d);
    write_value(os, static_cast<std::uint32_t>(target_.size()));
    write_raw(os, target_.data(), target_.size());
    write_value(os, hp_.length_scale);
    write_value(os, hp_.noise);
    write_value(os, jitter_);
    write_value(os, y_shift_);
    write_value(os, y_scale_);
    write_raw(os, inputs_->scaler.shift.data(), d * sizeof(double));
    write_raw(os, inputs_->scaler.scale.data(), d * sizeof(double));
    write_raw(os, inputs_->x.data(), static_cast<std::size_t>(inputs_->x.size()) * sizeof(double));
    write_raw(os, y_std_.data(), n * sizeof(double));
    write_raw(os, alpha_.data(), n * sizeof(double));
    if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

TrainedGpr TrainedGpr::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
    char magic[sizeof(kMagic)];
    read_raw(is, magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) fail(ErrorCode::SchemaMismatch, path.string() + " is not a GPR model file");
    const auto version = read_value<std::uint32_t>(is);
    if (version != kFormatVersion) fail(ErrorCode::SchemaMismatch, "unsupported GPR model version " + std::to_string(version));
    const auto n = read_value<std::uint32_t>(is);
    const auto d = read_value<std::uint32_t>(is);
    const auto name_len = read_value<std::uint32_t>(is);
    if (n == 0 || d == 0 || name_len > 4096) fail(ErrorCode::SchemaMismatch, "corrupt GPR model header");

    TrainedGpr m;
    m.target_.resize(name_len);
    read_raw(is, m.target_.data(), name_len);
    m.hp_.length_scale = read_value<double>(is);
    m.hp_.noise = read_value<double>(is);
    m.jitter_ = read_value<double>(is);
    m.y_shift_ = read_value<double>(is);
    m.y_scale_ = read_value<double>(is);
    auto inputs = std::make_shared<TrainingInputs>();
    inputs->scaler.shift.resize(d);
    inputs->scaler.scale.resize(d);
    read_raw(is, inputs->scaler.shift.data(), d * sizeof(double));
    read_raw(is, inputs->scaler.scale.data(), d * sizeof(double));
    inputs->x.resize(n, d);
    read_raw(is, inputs->x.data(), static_cast<std::size_t>(n) * d * sizeof(double));
    m.y_std_.resize(n);
    m.alpha_.resize(n);
    read_raw(is, m.y_std_.data(), n * sizeof(double));
    read_raw(is, m.alpha_.data(), n * sizeof(double));
    m.inputs_ = std::move(inputs);

    const Eigen::MatrixXd gram = gram_from_distances(squared_distances(m.inputs_->x), m.hp_.length_scale);
    auto factor = std::make_shared<Eigen::MatrixXd>(gram);
    factor->diagonal().array() += m.hp_.noise * m.hp_.noise + m.jitter_;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(*factor);
    if (llt.info() != Eigen::Success) fail(ErrorCode::FactorizationFailure, "stored GPR model no longer factorizes");
    m.factor_ = std::move(factor);
    return m;
}

bool TrainedGpr::share_inputs_with(const TrainedGpr& other) {
    if (!inputs_ || !other.inputs_) return false;
    if (inputs_ == other.inputs_) return true;
    if (inputs_->x != other.inputs_->x || inputs_->scaler != other.inputs_->scaler) return false;
    inputs_ = other.inputs_;
    return true;
}

bool TrainedGpr::same_state(const TrainedGpr& o) const {
    return inputs_ && o.inputs_ && inputs_->x == o.inputs_->x && inputs_->scaler == o.inputs_->scaler &&
           y_std_ == o.y_std_ && alpha_ == o.alpha_ && hp_.length_scale == o.hp_.length_scale &&
           hp_.noise == o.hp_.noise && jitter_ == o.jitter_ && y_shift_ == o.y_shift_ &&
           y_scale_ == o.y_scale_ && target_ == o.target_;
}

std::vector<FitResult> fit_many(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const HyperSearch& search,
                                const std::vector<std::string>& targets) {
    const Eigen::Index n = X.rows();
    const auto n_targets = static_cast<std::size_t>(Y.cols());
    if (n < 2) fail(ErrorCode::InvalidParameter, "GPR fit needs at least two training rows");
    if (Y.rows() != n || n_targets == 0) fail(ErrorCode::DimensionMismatch, "X and Y sizes differ");
    if (!targets.empty() && targets.size() != n_targets) fail(ErrorCode::DimensionMismatch, "one target name per column");
    if (search.length_grid.empty()) fail(ErrorCode::InvalidParameter, "empty length-scale grid");
    for (double l : search.length_grid) {
        if (!(l > 0.0)) fail(ErrorCode::InvalidParameter, "length scales must be > 0");
    }
    if (all_rows_equal(X)) fail(ErrorCode::DegenerateData, "all training inputs coincide");

    const std::vector<double> noise_grid = search.noise_grid.empty() ? std::vector<double>{0.0} : search.noise_grid;
    for (double s : noise_grid) {
        if (!(s >= 0.0)) fail(ErrorCode::InvalidParameter, "noise levels must be >= 0");
    }
    auto report = [&](const std::string& msg) {
        if (search.progress) search.progress(msg);
    };

    auto inputs = std::make_shared<TrainingInputs>();
    inputs->scaler = Standardizer::fit(X);
    inputs->x = inputs->scaler.apply(X);

    std::vector<TargetScale> scales(n_targets);
    Eigen::MatrixXd y_std(n, Y.cols());
    for (std::size_t t = 0; t < n_targets; ++t) {
        const auto c = static_cast<Eigen::Index>(t);
        scales[t] = fit_target_scale(Y.col(c));
        y_std.col(c) = (Y.col(c).array() - scales[t].shift) / scales[t].scale;
    }

    const Eigen::MatrixXd sq_dist = squared_distances(inputs->x);
    const std::size_t n_len = search.length_grid.size();
    const std::size_t n_noise = noise_grid.size();

    std::vector<LmlLandscape> landscapes(n_targets);
    for (auto& ls : landscapes) {
        ls.length_grid = search.length_grid;
        ls.noise_grid = noise_grid;
        ls.lml.assign(n_len * n_noise, kNaN);
        ls.n = static_cast<std::size_t>(n);
    }

    Eigen::MatrixXd gram, work;
    for (std::size_t il = 0; il < n_len; ++il) {
        gram = gram_from_distances(sq_dist, search.length_grid[il]);
        for (std::size_t is = 0; is < n_noise; ++is) {
            if (!factorize(gram, noise_grid[is], work)) continue;
            for (std::size_t t = 0; t < n_targets; ++t) {
                landscapes[t].lml[il * n_noise + is] = lml_from_factor(work, y_std.col(static_cast<Eigen::Index>(t)));
            }
        }
        std::ostringstream msg;
        msg << "lml grid: length " << (il + 1) << "/" << n_len << " (l_g=" << search.length_grid[il] << ")";
        report(msg.str());
    }

    std::vector<FitResult> results;
    results.reserve(n_targets);
    double cached_length = kNaN;
    for (std::size_t t = 0; t < n_targets; ++t) {
        LmlLandscape& ls = landscapes[t];
        double best = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t il = 0; il < n_len; ++il) {
            for (std::size_t is = 0; is < n_noise; ++is) {
                const double v = ls.at(il, is);
                if (!std::isnan(v) && v > best) {
                    best = v;
                    ls.best_length = il;
                    ls.best_noise = is;
                    any = true;
                }
            }
        }
        if (!any) fail(ErrorCode::FactorizationFailure, "no hyperparameter on the grid gave a valid factorization");

        const Eigen::VectorXd yt = y_std.col(static_cast<Eigen::Index>(t));
        auto evaluate = [&](double length, double noise) {
            if (!(length == cached_length)) {
                gram = gram_from_distances(sq_dist, length);
                cached_length = length;
            }
            if (!factorize(gram, noise, work)) return kNaN;
            return lml_from_factor(work, yt);
        };

        Hyperparams hp{ls.length_grid[ls.best_length], ls.noise_grid[ls.best_noise]};
        double best_val = best;
        if (search.refine && search.refine_iterations > 0) {
            if (n_len > 1) {
                const std::size_t lo = ls.best_length == 0 ? 0 : ls.best_length - 1;
                const std::size_t hi = std::min(ls.best_length + 1, n_len - 1);
                double best_u = std::log(hp.length_scale);
                golden_max([&](double u) { return evaluate(std::exp(u), hp.noise); },
                           std::log(ls.length_grid[lo]), std::log(ls.length_grid[hi]), search.refine_iterations,
                           best_u, best_val);
                hp.length_scale = std::exp(best_u);
            }
            if (hp.noise > 0.0) {
                const std::size_t j = ls.best_noise;
                const double lo = (j > 0 && noise_grid[j - 1] > 0.0) ? noise_grid[j - 1] : noise_grid[j];
                const double hi = j + 1 < n_noise ? noise_grid[j + 1] : noise_grid[j];
                if (hi > lo) {
                    double best_u = std::log(hp.noise);
                    golden_max([&](double u) { return evaluate(hp.length_scale, std::exp(u)); }, std::log(lo),
                               std::log(hi), search.refine_iterations, best_u, best_val);
                    hp.noise = std::exp(best_u);
                }
            }
            std::ostringstream msg;
            msg << "refined target " << t << ": l_g=" << hp.length_scale << " sigma_g=" << hp.noise
                << " lml=" << best_val;
            report(msg.str());
        }

        FitResult r{TrainedGpr(inputs, yt, scales[t].shift, scales[t].scale, hp, targets.empty() ? std::string{} : targets[t]),
                    std::move(ls), hp, best_val};
        results.push_back(std::move(r));
    }
    return results;
}

FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HyperSearch& search, const std::string& target) {
    auto results = fit_many(X, y, search, target.empty() ? std::vector<std::string>{} : std::vector<std::string>{target});
    return std::move(results.front());
}

}  // namespace fastval
