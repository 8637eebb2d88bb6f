#pragma once

/// Cohort file formats.
///
/// Motion CSV (UTF-8, '.' decimal separator):
///     V,T,n_subjects                  first line holds the three counts
///     <subject_id>                    then per subject: its id on one line,
///     v,t,x,y,z                       followed by V*T position lines
///                                     (1-based v and t, vertex outer, frame inner)
///
/// Motion binary container (little-endian):
///     16-byte magic "MOTIONSURV-BIN1\n"
///     uint64 V, uint64 T, uint64 n_subjects
///     n*V*T*3 float64 positions, subject outer, then v, t, xyz
///     n subject ids, each uint64 byte length followed by the bytes
///
/// Survival CSV: header `subject_id,time_days,event`, event in {0,1}.
/// Covariate CSV: header `subject_id,<name>...`, one row per subject.
/// Risk CSV: header `subject_id,risk`.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/motion_features.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv {

inline constexpr std::string_view kMotionBinaryMagic = "MOTIONSURV-BIN1\n";

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view what);

void write_motion_csv(std::ostream& out, const std::vector<MotionSample>& samples);
std::vector<MotionSample> read_motion_csv(std::istream& in);

void write_motion_binary(std::ostream& out, const std::vector<MotionSample>& samples);
std::vector<MotionSample> read_motion_binary(std::istream& in);

/// Write CSV or binary depending on `binary`.
void save_motion_file(const std::filesystem::path& path, const std::vector<MotionSample>& samples,
                      bool binary = false);
/// Reads either container; the binary magic is detected automatically.
std::vector<MotionSample> load_motion_file(const std::filesystem::path& path);

void write_survival_csv(std::ostream& out, Outcomes outcomes);
std::vector<SurvivalRecord> read_survival_csv(std::istream& in);
void save_survival_file(const std::filesystem::path& path, Outcomes outcomes);
std::vector<SurvivalRecord> load_survival_file(const std::filesystem::path& path);

struct CovariateTable {
    std::vector<std::string> subject_ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // subjects x covariates
};

void write_covariate_csv(std::ostream& out, const CovariateTable& table);
CovariateTable read_covariate_csv(std::istream& in);
void save_covariate_file(const std::filesystem::path& path, const CovariateTable& table);
CovariateTable load_covariate_file(const std::filesystem::path& path);

struct RiskTable {
    std::vector<std::string> subject_ids;
    std::vector<double> risks;
};

void save_risk_file(const std::filesystem::path& path, const RiskTable& table);
RiskTable load_risk_file(const std::filesystem::path& path);

/// Reorder `records` to follow `subject_ids`. Throws InputError when an id is
/// missing or duplicated.
std::vector<SurvivalRecord> align_outcomes(const std::vector<std::string>& subject_ids,
                                           const std::vector<SurvivalRecord>& records);

/// Select rows of `table` in the order of `subject_ids`.
Eigen::MatrixXd align_covariates(const std::vector<std::string>& subject_ids, const CovariateTable& table);

std::vector<std::string> subject_ids_of(const std::vector<MotionSample>& samples);

}  // namespace motionsurv
