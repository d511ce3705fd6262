#include "nssm/panel.hpp"

#include "nssm/errors.hpp"

#include <sstream>

namespace nssm {

std::string to_string(NetworkPolicy p) {
    switch (p) {
        case NetworkPolicy::oracle: return "oracle";
        case NetworkPolicy::carry_forward: return "carry_forward";
        case NetworkPolicy::user_supplied: return "user_supplied";
    }
    return "unknown";
}

NetworkPolicy parse_network_policy(const std::string& s) {
    if (s == "oracle") return NetworkPolicy::oracle;
    if (s == "carry_forward") return NetworkPolicy::carry_forward;
    if (s == "user_supplied") return NetworkPolicy::user_supplied;
    throw InvalidArgument("unknown network_policy '" + s + "'");
}

int PanelData::n_covariates() const { return z.empty() ? 0 : static_cast<int>(z.front().cols()); }

const MatrixXd& PanelData::w_at(int t) const {
    if (w_seq.empty()) throw InvalidArgument("PanelData: no network operator");
    if (w_seq.size() == 1) return w_seq.front();
    if (t < 0 || t >= static_cast<int>(w_seq.size())) {
        std::ostringstream os;
        os << "PanelData: no network operator for time " << t << " (have " << w_seq.size() << ")";
        throw InvalidArgument(os.str());
    }
    return w_seq[static_cast<std::size_t>(t)];
}

MatrixXd PanelData::z_at(int t) const {
    if (z.empty()) return MatrixXd(n_nodes(), 0);
    if (t < 0 || t >= static_cast<int>(z.size())) {
        std::ostringstream os;
        os << "PanelData: no covariates for time " << t;
        throw InvalidArgument(os.str());
    }
    return z[static_cast<std::size_t>(t)];
}

PanelData PanelData::head(int t_end) const {
    PanelData out;
    out.y = y.topRows(t_end);
    if (w_seq.size() <= 1) {
        out.w_seq = w_seq;
    } else {
        out.w_seq.assign(w_seq.begin(), w_seq.begin() + t_end);
    }
    if (!z.empty()) out.z.assign(z.begin(), z.begin() + t_end);
    return out;
}

void PanelData::validate() const {
    if (y.rows() == 0 || y.cols() == 0) throw InvalidArgument("PanelData: empty panel");
    if (!y.allFinite()) throw InvalidArgument("PanelData: non-finite value in panel");
    if (w_seq.empty()) throw InvalidArgument("PanelData: missing network operator");
    if (w_seq.size() != 1 && static_cast<int>(w_seq.size()) < n_times())
        throw InvalidArgument("PanelData: network sequence shorter than the panel");
    for (const auto& w : w_seq)
        if (w.rows() != n_nodes() || w.cols() != n_nodes())
            throw InvalidArgument("PanelData: network operator is not N x N");
    if (!z.empty()) {
        if (static_cast<int>(z.size()) < n_times())
            throw InvalidArgument("PanelData: covariate sequence shorter than the panel");
        for (const auto& zt : z)
            if (zt.rows() != n_nodes() || zt.cols() != z.front().cols())
                throw InvalidArgument("PanelData: covariate block has inconsistent shape");
    }
}

std::vector<VectorXd> lag_window(const MatrixXd& y, int t, int p) {
    if (t - p < 0 || t > y.rows()) {
        std::ostringstream os;
        os << "lag_window: time " << t << " needs " << p << " earlier rows";
        throw InvalidArgument(os.str());
    }
    std::vector<VectorXd> lags;
    lags.reserve(static_cast<std::size_t>(p));
    for (int l = 1; l <= p; ++l) lags.emplace_back(y.row(t - l).transpose());
    return lags;
}

}  // namespace nssm
