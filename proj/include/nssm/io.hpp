#pragma once

#include "nssm/graph.hpp"
#include "nssm/lgss.hpp"
#include "nssm/evalharness.hpp"
#include "nssm/poissonmodel.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace nssm::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

/// Malformed or unreadable input file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a of a byte string / file contents, as 16 hex digits.
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);
[[nodiscard]] std::string file_checksum(const fs::path& path);

[[nodiscard]] std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Numeric CSV. A first row that does not parse as numbers is taken as a header.
struct Table {
    std::vector<std::string> header;
    MatrixXd values;
};
[[nodiscard]] Table read_csv(const fs::path& path);
void write_csv(const fs::path& path, const MatrixXd& m, const std::vector<std::string>& header = {});

/// Shortest round-trip decimal form, so outputs are byte-stable.
[[nodiscard]] std::string format_double(double v);

/// Networks on disk:
///  - dense N x N matrix (no header);
///  - edge list with header src,dst[,weight] (0-based node ids);
///  - sequence with header time,src,dst,weight (one operator per time).
/// Dense and edge-list inputs are row-normalized unless already so.
[[nodiscard]] std::vector<MatrixXd> read_networks(const fs::path& path, int n_nodes, bool normalize = true);
void write_network_sequence(const fs::path& path, const std::vector<MatrixXd>& w_seq);

/// Panels: wide (T x N, header optional) or long with header time,node,value.
[[nodiscard]] MatrixXd read_panel(const fs::path& path);
/// Covariates in long form: header time,node,z0,z1,...
[[nodiscard]] std::vector<MatrixXd> read_covariates(const fs::path& path, int n_times, int n_nodes);

[[nodiscard]] Json belief_to_json(const lgss::Belief& b);
[[nodiscard]] Json filter_run_to_json(const lgss::FilterRun& run);

/// origin,horizon,node,metric,value rows for every per-node metric.
void write_cells_csv(const fs::path& path, const eval::EvalReport& rep);
/// draw,node,horizon,intensity,count rows.
void write_draws_csv(const fs::path& path, const std::vector<poisson::ForecastEnsemble>& ens);

}  // namespace nssm::io
