#include "motionsurv/io.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "motionsurv/errors.hpp"

namespace motionsurv {
namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::uint64_t parse_count(std::string_view text, std::string_view what) {
    text = trim(text);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw InputError(std::string(what) + ": expected a non-negative integer, got '" + std::string(text) + "'");
    }
    return value;
}

bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) return true;
    }
    return false;
}

std::string where(std::size_t line_no) { return "line " + std::to_string(line_no); }

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes{};
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) throw InputError("motion binary: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double d) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

double get_f64(std::istream& in) {
    const std::uint64_t bits = get_u64(in);
    double d = 0.0;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

void check_uniform_dims(const std::vector<MotionSample>& samples) {
    if (samples.empty()) return;
    const std::size_t v = samples.front().vertex_count();
    const std::size_t t = samples.front().frame_count();
    for (const auto& s : samples) {
        validate_sample(s);
        if (s.vertex_count() != v || s.frame_count() != t) {
            throw InputError("subject '" + s.subject_id + "': dims differ from the rest of the cohort");
        }
    }
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    return out;
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw ContractError("format_double: conversion failed");
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, std::string_view what) {
    text = trim(text);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw InputError(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
    }
    return value;
}

void write_motion_csv(std::ostream& out, const std::vector<MotionSample>& samples) {
    check_uniform_dims(samples);
    const std::size_t v_count = samples.empty() ? 0 : samples.front().vertex_count();
    const std::size_t t_count = samples.empty() ? 0 : samples.front().frame_count();
    out << v_count << ',' << t_count << ',' << samples.size() << '\n';
    for (const auto& s : samples) {
        out << s.subject_id << '\n';
        for (std::size_t v = 0; v < v_count; ++v) {
            for (std::size_t t = 0; t < t_count; ++t) {
                const Vec3& p = s.trajectories[v][t];
                out << v + 1 << ',' << t + 1 << ',' << format_double(p.x) << ',' << format_double(p.y)
                    << ',' << format_double(p.z) << '\n';
            }
        }
    }
}

std::vector<MotionSample> read_motion_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!next_line(in, line, line_no)) throw InputError("motion csv: empty file");
    const auto header = split(trim(line));
    if (header.size() != 3) throw InputError("motion csv: header must be 'V,T,n_subjects'");
    const std::uint64_t v_count = parse_count(header[0], "motion csv header V");
    const std::uint64_t t_count = parse_count(header[1], "motion csv header T");
    const std::uint64_t n = parse_count(header[2], "motion csv header n_subjects");
    if (v_count < 1 || t_count < 2) throw InputError("motion csv: need V >= 1 and T >= 2");

    std::vector<MotionSample> samples(n);
    for (auto& s : samples) {
        if (!next_line(in, line, line_no)) throw InputError("motion csv: missing subject record");
        s.subject_id = std::string(trim(line));
        if (s.subject_id.find(',') != std::string::npos) {
            throw InputError("motion csv " + where(line_no) + ": expected a subject id line");
        }
        s.trajectories.assign(v_count, VertexTrajectory(t_count));
        std::vector<char> seen(v_count * t_count, 0);
        for (std::uint64_t k = 0; k < v_count * t_count; ++k) {
            if (!next_line(in, line, line_no)) throw InputError("motion csv: truncated subject '" + s.subject_id + "'");
            const auto fields = split(trim(line));
            if (fields.size() != 5) throw InputError("motion csv " + where(line_no) + ": expected v,t,x,y,z");
            const std::uint64_t v = parse_count(fields[0], "motion csv v");
            const std::uint64_t t = parse_count(fields[1], "motion csv t");
            if (v < 1 || v > v_count || t < 1 || t > t_count) {
                throw InputError("motion csv " + where(line_no) + ": vertex/frame index out of range");
            }
            auto& slot = seen[(v - 1) * t_count + (t - 1)];
            if (slot) throw InputError("motion csv " + where(line_no) + ": duplicate vertex/frame entry");
            slot = 1;
            s.trajectories[v - 1][t - 1] = {parse_double(fields[2], "x"), parse_double(fields[3], "y"),
                                            parse_double(fields[4], "z")};
        }
        validate_sample(s);
    }
    return samples;
}

void write_motion_binary(std::ostream& out, const std::vector<MotionSample>& samples) {
    check_uniform_dims(samples);
    const std::size_t v_count = samples.empty() ? 0 : samples.front().vertex_count();
    const std::size_t t_count = samples.empty() ? 0 : samples.front().frame_count();
    out.write(kMotionBinaryMagic.data(), static_cast<std::streamsize>(kMotionBinaryMagic.size()));
    put_u64(out, v_count);
    put_u64(out, t_count);
    put_u64(out, samples.size());
    for (const auto& s : samples) {
        for (const auto& traj : s.trajectories) {
            for (const Vec3& p : traj) {
                put_f64(out, p.x);
                put_f64(out, p.y);
                put_f64(out, p.z);
            }
        }
    }
    for (const auto& s : samples) {
        put_u64(out, s.subject_id.size());
        out.write(s.subject_id.data(), static_cast<std::streamsize>(s.subject_id.size()));
    }
}

std::vector<MotionSample> read_motion_binary(std::istream& in) {
    std::array<char, 16> magic{};
    if (!in.read(magic.data(), 16) || std::string_view(magic.data(), 16) != kMotionBinaryMagic) {
        throw InputError("motion binary: bad magic header");
    }
    const std::uint64_t v_count = get_u64(in);
    const std::uint64_t t_count = get_u64(in);
    const std::uint64_t n = get_u64(in);
    if (v_count < 1 || t_count < 2) throw InputError("motion binary: need V >= 1 and T >= 2");
    std::vector<MotionSample> samples(n);
    for (auto& s : samples) {
        s.trajectories.assign(v_count, VertexTrajectory(t_count));
        for (auto& traj : s.trajectories) {
            for (Vec3& p : traj) {
                p.x = get_f64(in);
                p.y = get_f64(in);
                p.z = get_f64(in);
            }
        }
    }
    for (auto& s : samples) {
        const std::uint64_t len = get_u64(in);
        if (len > (1u << 20)) throw InputError("motion binary: implausible subject id length");
        s.subject_id.resize(len);
        if (!in.read(s.subject_id.data(), static_cast<std::streamsize>(len))) {
            throw InputError("motion binary: truncated subject ids");
        }
        validate_sample(s);
    }
    return samples;
}

void save_motion_file(const std::filesystem::path& path, const std::vector<MotionSample>& samples,
                      bool binary) {
    auto out = open_out(path, binary);
    if (binary) {
        write_motion_binary(out, samples);
    } else {
        write_motion_csv(out, samples);
    }
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<MotionSample> load_motion_file(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    std::array<char, 16> head{};
    in.read(head.data(), 16);
    const bool binary = in.gcount() == 16 && std::string_view(head.data(), 16) == kMotionBinaryMagic;
    in.clear();
    in.seekg(0);
    return binary ? read_motion_binary(in) : read_motion_csv(in);
}

void write_survival_csv(std::ostream& out, Outcomes outcomes) {
    out << "subject_id,time_days,event\n";
    for (const auto& r : outcomes) {
        out << r.subject_id << ',' << format_double(r.time) << ',' << r.event << '\n';
    }
}

std::vector<SurvivalRecord> read_survival_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!next_line(in, line, line_no) || trim(line) != "subject_id,time_days,event") {
        throw InputError("survival csv: header must be 'subject_id,time_days,event'");
    }
    std::vector<SurvivalRecord> out;
    while (next_line(in, line, line_no)) {
        const auto fields = split(trim(line));
        if (fields.size() != 3) throw InputError("survival csv " + where(line_no) + ": expected 3 fields");
        SurvivalRecord r;
        r.subject_id = std::string(trim(fields[0]));
        r.time = parse_double(fields[1], "survival csv time_days");
        const auto ev = trim(fields[2]);
        if (ev != "0" && ev != "1") throw InputError("survival csv " + where(line_no) + ": event must be 0 or 1");
        r.event = ev == "1" ? 1 : 0;
        out.push_back(std::move(r));
    }
    validate_outcomes(out);
    return out;
}

void save_survival_file(const std::filesystem::path& path, Outcomes outcomes) {
    auto out = open_out(path);
    write_survival_csv(out, outcomes);
}

std::vector<SurvivalRecord> load_survival_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_survival_csv(in);
}

void write_covariate_csv(std::ostream& out, const CovariateTable& table) {
    out << "subject_id";
    for (const auto& name : table.names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        out << table.subject_ids[i];
        for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
            out << ',' << format_double(table.values(static_cast<Eigen::Index>(i), c));
        }
        out << '\n';
    }
}

CovariateTable read_covariate_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!next_line(in, line, line_no)) throw InputError("covariate csv: empty file");
    const auto header = split(trim(line));
    if (header.size() < 2 || trim(header[0]) != "subject_id") {
        throw InputError("covariate csv: header must start with 'subject_id' and name >= 1 covariate");
    }
    CovariateTable table;
    for (std::size_t c = 1; c < header.size(); ++c) table.names.emplace_back(trim(header[c]));
    std::vector<std::vector<double>> rows;
    while (next_line(in, line, line_no)) {
        const auto fields = split(trim(line));
        if (fields.size() != header.size()) {
            throw InputError("covariate csv " + where(line_no) + ": wrong number of fields");
        }
        table.subject_ids.emplace_back(trim(fields[0]));
        std::vector<double> row;
        for (std::size_t c = 1; c < fields.size(); ++c) row.push_back(parse_double(fields[c], table.names[c - 1]));
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
    }
    return table;
}

void save_covariate_file(const std::filesystem::path& path, const CovariateTable& table) {
    auto out = open_out(path);
    write_covariate_csv(out, table);
}

CovariateTable load_covariate_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_covariate_csv(in);
}

void save_risk_file(const std::filesystem::path& path, const RiskTable& table) {
    auto out = open_out(path);
    out << "subject_id,risk\n";
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        out << table.subject_ids[i] << ',' << format_double(table.risks[i]) << '\n';
    }
}

RiskTable load_risk_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    if (!next_line(in, line, line_no) || trim(line) != "subject_id,risk") {
        throw InputError("risk csv: header must be 'subject_id,risk'");
    }
    RiskTable table;
    while (next_line(in, line, line_no)) {
        const auto fields = split(trim(line));
        if (fields.size() != 2) throw InputError("risk csv " + where(line_no) + ": expected 2 fields");
        table.subject_ids.emplace_back(trim(fields[0]));
        table.risks.push_back(parse_double(fields[1], "risk"));
    }
    return table;
}

std::vector<SurvivalRecord> align_outcomes(const std::vector<std::string>& subject_ids,
                                           const std::vector<SurvivalRecord>& records) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!index.emplace(records[i].subject_id, i).second) {
            throw InputError("survival data: duplicate subject '" + records[i].subject_id + "'");
        }
    }
    std::vector<SurvivalRecord> out;
    out.reserve(subject_ids.size());
    for (const auto& id : subject_ids) {
        const auto it = index.find(id);
        if (it == index.end()) throw InputError("survival data: no record for subject '" + id + "'");
        out.push_back(records[it->second]);
    }
    return out;
}

Eigen::MatrixXd align_covariates(const std::vector<std::string>& subject_ids, const CovariateTable& table) {
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        if (!index.emplace(table.subject_ids[i], static_cast<Eigen::Index>(i)).second) {
            throw InputError("covariate data: duplicate subject '" + table.subject_ids[i] + "'");
        }
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(subject_ids.size()), table.values.cols());
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
        const auto it = index.find(subject_ids[i]);
        if (it == index.end()) throw InputError("covariate data: no row for subject '" + subject_ids[i] + "'");
        out.row(static_cast<Eigen::Index>(i)) = table.values.row(it->second);
    }
    return out;
}

std::vector<std::string> subject_ids_of(const std::vector<MotionSample>& samples) {
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.subject_id);
    return ids;
}

}  // namespace motionsurv
