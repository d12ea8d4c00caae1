#include "hc/health_index.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/stats.hpp"

namespace hc {

namespace {

bool complete(const PanelRecord& r) {
    for (double z : r.indicators)
        if (std::isnan(z)) return false;
    return true;
}

}  // namespace

HealthIndexModel fit_latent_index(const Panel& panel, IndexLink link) {
    std::vector<const PanelRecord*> sample;
    for (const auto& r : panel.records)
        if (complete(r)) sample.push_back(&r);
    const int k = panel.indicator_names.empty() && !panel.records.empty()
                      ? static_cast<int>(panel.records.front().indicators.size())
                      : static_cast<int>(panel.indicator_names.size());
    const int n = static_cast<int>(sample.size());
    if (n < 10 * (k + 1))
        throw EstimationError("fit_latent_index: too few complete rows (" +
                              std::to_string(n) + ")");

    Eigen::MatrixXd X(n, k + 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int j = 0; j < k; ++j) X(i, j + 1) = sample[i]->indicators[j];
        y(i) = sample[i]->self_reported_good ? 1.0 : 0.0;
    }

    // Duplicated or constant columns make the information matrix singular.
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols())
            throw EstimationError("fit_latent_index: singular design matrix");
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
    HealthIndexModel model;
    model.link = link;
    const int max_iter = 100;
    double ll = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd xb = X * beta;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(k + 1);
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k + 1, k + 1);
        ll = 0.0;
        for (int i = 0; i < n; ++i) {
            double p, w, lam;
            if (link == IndexLink::Probit) {
                p = std::clamp(normal_cdf(xb(i)), 1e-12, 1.0 - 1e-12);
                const double phi = normal_pdf(xb(i));
                lam = phi * (y(i) - p) / (p * (1.0 - p));
                w = phi * phi / (p * (1.0 - p));
            } else {
                p = std::clamp(1.0 / (1.0 + std::exp(-xb(i))), 1e-12, 1.0 - 1e-12);
                lam = y(i) - p;
                w = p * (1.0 - p);
            }
            ll += y(i) * std::log(p) + (1.0 - y(i)) * std::log(1.0 - p);
            grad += lam * X.row(i).transpose();
            info += w * X.row(i).transpose() * X.row(i);
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success)
            throw EstimationError("fit_latent_index: singular information matrix");
        const Eigen::VectorXd step = ldlt.solve(grad);
        beta += step;
        model.iterations = iter + 1;
        if (step.cwiseAbs().maxCoeff() < 1e-10) {
            model.converged = true;
            break;
        }
        if (beta.cwiseAbs().maxCoeff() > 50.0) {
            int worst = 0;
            beta.cwiseAbs().maxCoeff(&worst);
            const std::string name = worst == 0 ? "intercept"
                                     : (worst - 1 < static_cast<int>(panel.indicator_names.size())
                                            ? panel.indicator_names[worst - 1]
                                            : "indicator" + std::to_string(worst - 1));
            throw EstimationError("fit_latent_index: perfect separation on " + name);
        }
    }
    model.log_likelihood = ll;
    model.indicator_names = panel.indicator_names;
    model.alpha.assign(beta.data(), beta.data() + beta.size());

    Eigen::VectorXd index = X * beta;
    model.standard_mean = index.mean();
    const double sd =
        std::sqrt((index.array() - model.standard_mean).square().sum() / (n - 1));
    if (sd <= 0.0) throw EstimationError("fit_latent_index: degenerate fitted index");
    model.standard_sd = sd;
    return model;
}

std::vector<std::optional<double>> predict_index(const HealthIndexModel& model,
                                                 const Panel& panel) {
    std::vector<std::optional<double>> out;
    out.reserve(panel.records.size());
    for (const auto& r : panel.records) {
        if (!complete(r) ||
            r.indicators.size() + 1 != model.alpha.size()) {
            out.push_back(std::nullopt);
            continue;
        }
        double v = model.alpha[0];
        for (std::size_t j = 0; j < r.indicators.size(); ++j)
            v += model.alpha[j + 1] * r.indicators[j];
        out.push_back((v - model.standard_mean) / model.standard_sd);
    }
    return out;
}

ResidualSeries residualize(const std::vector<std::optional<double>>& index,
                           const Panel& panel) {
    if (index.size() != panel.records.size())
        throw ConfigError("residualize: index/panel size mismatch");
    std::vector<int> rows;
    for (std::size_t i = 0; i < index.size(); ++i)
        if (index[i]) rows.push_back(static_cast<int>(i));
    const int n = static_cast<int>(rows.size());
    const int k = 8;  // 1, age, age^2, age^3, birth_year, edu1, edu2, partner
    if (n < 2 * k) throw EstimationError("residualize: too few observations");

    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const PanelRecord& r = panel.records[rows[i]];
        const double a = r.age;
        X(i, 0) = 1.0;
        X(i, 1) = a;
        X(i, 2) = a * a;
        X(i, 3) = a * a * a;
        X(i, 4) = r.birth_year;
        X(i, 5) = r.education == 1 ? 1.0 : 0.0;
        X(i, 6) = r.education == 2 ? 1.0 : 0.0;
        X(i, 7) = r.has_partner ? 1.0 : 0.0;
        y(i) = *index[rows[i]];
    }
    // Age polynomial centered for conditioning; coefficients reported on the
    // centered basis.
    const double age_mean = X.col(1).mean();
    for (int i = 0; i < n; ++i) {
        const double a = X(i, 1) - age_mean;
        X(i, 1) = a;
        X(i, 2) = a * a;
        X(i, 3) = a * a * a;
        X(i, 4) -= 1945.0;
    }
    const Eigen::VectorXd beta = ols(X, y);
    const Eigen::VectorXd resid = y - X * beta;

    ResidualSeries out;
    out.coefficients.assign(beta.data(), beta.data() + beta.size());
    out.values.assign(index.size(), std::nullopt);
    for (int i = 0; i < n; ++i) out.values[rows[i]] = resid(i);
    return out;
}

void save_index_model(const HealthIndexModel& model, const std::string& path) {
    CsvTable t;
    t.columns = {"key", "value"};
    t.rows.push_back({"schema", "hindex_v1"});
    t.rows.push_back({"link", model.link == IndexLink::Probit ? "probit" : "logit"});
    t.rows.push_back({"intercept", format_double(model.alpha[0])});
    for (std::size_t j = 0; j + 1 < model.alpha.size(); ++j)
        t.rows.push_back({"alpha_" + model.indicator_names[j],
                          format_double(model.alpha[j + 1])});
    t.rows.push_back({"standard_mean", format_double(model.standard_mean)});
    t.rows.push_back({"standard_sd", format_double(model.standard_sd)});
    write_csv(path, t);
}

HealthIndexModel load_index_model(const std::string& path) {
    const CsvTable t = read_csv(path);
    HealthIndexModel m;
    m.converged = true;
    std::vector<double> coefs;
    for (const auto& row : t.rows) {
        const std::string& key = row[0];
        if (key == "schema") {
            if (row[1] != "hindex_v1") throw LoadError(path + ": unexpected schema " + row[1]);
        } else if (key == "link") {
            m.link = row[1] == "logit" ? IndexLink::Logit : IndexLink::Probit;
        } else if (key == "intercept") {
            m.alpha.push_back(std::stod(row[1]));
        } else if (key.rfind("alpha_", 0) == 0) {
            m.indicator_names.push_back(key.substr(6));
            coefs.push_back(std::stod(row[1]));
        } else if (key == "standard_mean") {
            m.standard_mean = std::stod(row[1]);
        } else if (key == "standard_sd") {
            m.standard_sd = std::stod(row[1]);
        }
    }
    if (m.alpha.empty()) throw LoadError(path + ": missing intercept");
    m.alpha.insert(m.alpha.end(), coefs.begin(), coefs.end());
    return m;
}

}  // namespace hc
