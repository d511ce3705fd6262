#include "nssm/io.hpp"

#include "nssm/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace nssm::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec == std::errc() && res.ptr == last) return true;
    if (s == "nan" || s == "NaN") {
        v = std::nan("");
        return true;
    }
    return false;
}

int as_index(double v, const fs::path& path, const char* what) {
    if (v < 0.0 || v != std::floor(v)) throw IoError(path.string() + ": " + what + " must be a nonnegative integer");
    return static_cast<int>(v);
}

int column_of(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return static_cast<int>(i);
    return -1;
}

bool rows_normalized(const MatrixXd& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double s = w.row(i).sum();
        if (s != 0.0 && std::abs(s - 1.0) > 1e-12) return false;
    }
    return true;
}

MatrixXd maybe_normalize(MatrixXd w, bool normalize) {
    if (!normalize || rows_normalized(w)) return w;
    return graph::row_normalize(graph::make_adjacency(std::move(w), true)).w;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_checksum(const fs::path& path) { return fnv1a_hex(read_text(path)); }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Table read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    Table t;
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        std::vector<double> vals(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_double(cells[i], vals[i]);
        if (!numeric) {
            if (rows.empty() && t.header.empty()) {
                t.header = cells;
                continue;
            }
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric entry");
        }
        if (!rows.empty() && vals.size() != rows.front().size())
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(vals));
    }
    const auto cols = rows.empty() ? static_cast<Eigen::Index>(t.header.size())
                                   : static_cast<Eigen::Index>(rows.front().size());
    t.values.resize(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (Eigen::Index c = 0; c < cols; ++c) t.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    if (!t.header.empty() && static_cast<Eigen::Index>(t.header.size()) != cols)
        throw IoError(path.string() + ": header width differs from the data");
    return t;
}

void write_csv(const fs::path& path, const MatrixXd& m, const std::vector<std::string>& header) {
    std::string out;
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
        out += '\n';
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    write_text(path, out);
}

std::vector<MatrixXd> read_networks(const fs::path& path, int n_nodes, bool normalize) {
    const Table t = read_csv(path);
    if (n_nodes < 1) throw IoError("read_networks: number of nodes must be positive");
    const int c_time = column_of(t, "time");
    const int c_src = column_of(t, "src");
    const int c_dst = column_of(t, "dst");
    const int c_w = column_of(t, "weight");

    auto place = [&](MatrixXd& m, Eigen::Index r) {
        const int i = as_index(t.values(r, c_src), path, "src");
        const int j = as_index(t.values(r, c_dst), path, "dst");
        if (i >= n_nodes || j >= n_nodes) throw IoError(path.string() + ": node id out of range");
        m(i, j) = c_w >= 0 ? t.values(r, c_w) : 1.0;
    };

    if (c_time >= 0) {
        if (c_src < 0 || c_dst < 0 || c_w < 0) throw IoError(path.string() + ": sequence needs time,src,dst,weight");
        std::map<int, MatrixXd> by_time;
        int max_t = -1;
        for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
            const int tt = as_index(t.values(r, c_time), path, "time");
            max_t = std::max(max_t, tt);
            auto it = by_time.try_emplace(tt, MatrixXd::Zero(n_nodes, n_nodes)).first;
            place(it->second, r);
        }
        std::vector<MatrixXd> seq;
        for (int tt = 0; tt <= max_t; ++tt) {
            auto it = by_time.find(tt);
            seq.push_back(maybe_normalize(it == by_time.end() ? MatrixXd::Zero(n_nodes, n_nodes) : it->second, normalize));
        }
        return seq;
    }
    if (c_src >= 0 && c_dst >= 0) {
        MatrixXd m = MatrixXd::Zero(n_nodes, n_nodes);
        for (Eigen::Index r = 0; r < t.values.rows(); ++r) place(m, r);
        return {maybe_normalize(std::move(m), normalize)};
    }
    if (t.values.rows() != n_nodes || t.values.cols() != n_nodes)
        throw IoError(path.string() + ": dense network must be " + std::to_string(n_nodes) + " x " +
                      std::to_string(n_nodes));
    return {maybe_normalize(t.values, normalize)};
}

void write_network_sequence(const fs::path& path, const std::vector<MatrixXd>& w_seq) {
    std::string out = "time,src,dst,weight\n";
    for (std::size_t tt = 0; tt < w_seq.size(); ++tt) {
        const MatrixXd& w = w_seq[tt];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                if (w(i, j) != 0.0)
                    out += std::to_string(tt) + ',' + std::to_string(i) + ',' + std::to_string(j) + ',' +
                           format_double(w(i, j)) + '\n';
    }
    write_text(path, out);
}

MatrixXd read_panel(const fs::path& path) {
    const Table t = read_csv(path);
    const int c_time = column_of(t, "time");
    const int c_node = column_of(t, "node");
    const int c_val = column_of(t, "value");
    if (c_time < 0 || c_node < 0 || c_val < 0) {
        if (t.values.size() == 0) throw IoError(path.string() + ": empty panel");
        return t.values;
    }
    int max_t = -1;
    int max_n = -1;
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        max_t = std::max(max_t, as_index(t.values(r, c_time), path, "time"));
        max_n = std::max(max_n, as_index(t.values(r, c_node), path, "node"));
    }
    MatrixXd y = MatrixXd::Constant(max_t + 1, max_n + 1, std::nan(""));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r)
        y(static_cast<int>(t.values(r, c_time)), static_cast<int>(t.values(r, c_node))) = t.values(r, c_val);
    if (y.hasNaN()) throw IoError(path.string() + ": long panel has missing (time, node) cells");
    return y;
}

std::vector<MatrixXd> read_covariates(const fs::path& path, int n_times, int n_nodes) {
    const Table t = read_csv(path);
    const int c_time = column_of(t, "time");
    const int c_node = column_of(t, "node");
    if (c_time != 0 || c_node != 1 || t.values.cols() < 3)
        throw IoError(path.string() + ": covariates need header time,node,z0,...");
    const auto q = t.values.cols() - 2;
    std::vector<MatrixXd> z(static_cast<std::size_t>(n_times), MatrixXd::Constant(n_nodes, q, std::nan("")));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        const int tt = as_index(t.values(r, 0), path, "time");
        const int i = as_index(t.values(r, 1), path, "node");
        if (tt >= n_times || i >= n_nodes) throw IoError(path.string() + ": covariate row out of range");
        z[static_cast<std::size_t>(tt)].row(i) = t.values.row(r).tail(q);
    }
    for (const auto& m : z)
        if (m.hasNaN()) throw IoError(path.string() + ": covariates missing for some (time, node)");
    return z;
}

Json belief_to_json(const lgss::Belief& b) {
    Json j;
    j["time_index"] = b.time_index;
    j["mean"] = std::vector<double>(b.mean.data(), b.mean.data() + b.mean.size());
    Json cov = Json::array();
    for (Eigen::Index r = 0; r < b.cov.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(b.cov.cols()));
        for (Eigen::Index c = 0; c < b.cov.cols(); ++c) row[static_cast<std::size_t>(c)] = b.cov(r, c);
        cov.push_back(row);
    }
    j["cov"] = cov;
    return j;
}

Json filter_run_to_json(const lgss::FilterRun& run) {
    Json j;
    j["initial"] = belief_to_json(run.initial);
    j["filtered"] = Json::array();
    j["predicted"] = Json::array();
    for (const auto& b : run.filtered) j["filtered"].push_back(belief_to_json(b));
    for (const auto& b : run.predicted) j["predicted"].push_back(belief_to_json(b));
    j["loglik"] = run.loglik;
    j["step_loglik"] = run.step_loglik;
    if (run.threshold_states) {
        Json s = Json::array();
        for (Eigen::Index r = 0; r < run.threshold_states->rows(); ++r) {
            std::vector<int> row(static_cast<std::size_t>(run.threshold_states->cols()));
            for (Eigen::Index c = 0; c < run.threshold_states->cols(); ++c)
                row[static_cast<std::size_t>(c)] = (*run.threshold_states)(r, c);
            s.push_back(row);
        }
        j["threshold_states"] = s;
    }
    return j;
}

void write_cells_csv(const fs::path& path, const eval::EvalReport& rep) {
    std::string out = "origin,horizon,node,metric,value\n";
    for (const auto& hr : rep.by_horizon) {
        auto emit = [&](const MatrixXd& m, const char* name) {
            if (m.size() == 0) return;
            for (Eigen::Index o = 0; o < m.rows(); ++o)
                for (Eigen::Index i = 0; i < m.cols(); ++i) {
                    if (std::isnan(m(o, i))) continue;
                    out += std::to_string(rep.origins[static_cast<std::size_t>(o)]) + ',' + std::to_string(hr.horizon) +
                           ',' + std::to_string(i) + ',' + name + ',' + format_double(m(o, i)) + '\n';
                }
        };
        emit(hr.abs_err, "abs_err");
        emit(hr.sq_err, "sq_err");
        emit(hr.covered, "covered");
        emit(hr.pit, "pit");
    }
    write_text(path, out);
}

void write_draws_csv(const fs::path& path, const std::vector<poisson::ForecastEnsemble>& ens) {
    std::string out = "draw,node,horizon,intensity,count\n";
    for (const auto& e : ens)
        for (int s = 0; s < e.n_draws(); ++s)
            for (int i = 0; i < e.n_nodes(); ++i)
                out += std::to_string(s) + ',' + std::to_string(i) + ',' + std::to_string(e.horizon) + ',' +
                       format_double(e.intensities(s, i)) + ',' + std::to_string(e.counts(s, i)) + '\n';
    write_text(path, out);
}

}  // namespace nssm::io
