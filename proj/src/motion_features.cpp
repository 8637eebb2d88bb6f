#include "motionsurv/motion_features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "motionsurv/errors.hpp"
#include "motionsurv/rng.hpp"

namespace motionsurv {

void validate_sample(const MotionSample& sample) {
    const std::size_t v_count = sample.vertex_count();
    if (v_count == 0) throw InputError("subject '" + sample.subject_id + "': no vertices");
    const std::size_t t_count = sample.frame_count();
    if (t_count < 2) throw InputError("subject '" + sample.subject_id + "': need at least 2 frames");
    for (std::size_t v = 0; v < v_count; ++v) {
        const auto& traj = sample.trajectories[v];
        if (traj.size() != t_count) {
            std::ostringstream msg;
            msg << "subject '" << sample.subject_id << "': vertex " << v + 1 << " has "
                << traj.size() << " frames, expected " << t_count;
            throw InputError(msg.str());
        }
        for (const Vec3& p : traj) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
                std::ostringstream msg;
                msg << "subject '" << sample.subject_id << "': non-finite coordinate at vertex " << v + 1;
                throw InputError(msg.str());
            }
        }
    }
}

Eigen::VectorXd build_displacement_vector(const MotionSample& sample) {
    validate_sample(sample);
    const std::size_t t_count = sample.frame_count();
    Eigen::VectorXd out(static_cast<Eigen::Index>(feature_length(sample.vertex_count(), t_count)));
    Eigen::Index k = 0;
    for (const auto& traj : sample.trajectories) {
        const Vec3& ref = traj.front();
        for (std::size_t t = 1; t < t_count; ++t) {
            out(k++) = traj[t].x - ref.x;
            out(k++) = traj[t].y - ref.y;
            out(k++) = traj[t].z - ref.z;
        }
    }
    return out;
}

Eigen::MatrixXd build_feature_matrix(const std::vector<MotionSample>& samples) {
    if (samples.empty()) return {};
    const std::size_t v_count = samples.front().vertex_count();
    const std::size_t t_count = samples.front().frame_count();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()),
                        static_cast<Eigen::Index>(feature_length(v_count, t_count)));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].vertex_count() != v_count || samples[i].frame_count() != t_count) {
            throw InputError("subject '" + samples[i].subject_id +
                             "': vertex/frame counts differ from the rest of the cohort");
        }
        out.row(static_cast<Eigen::Index>(i)) = build_displacement_vector(samples[i]).transpose();
    }
    return out;
}

std::vector<double> mean_displacement_per_vertex(const MotionSample& sample) {
    validate_sample(sample);
    const std::size_t t_count = sample.frame_count();
    std::vector<double> out;
    out.reserve(sample.vertex_count());
    for (const auto& traj : sample.trajectories) {
        const Vec3& ref = traj.front();
        double total = 0.0;
        for (std::size_t t = 1; t < t_count; ++t) {
            total += std::hypot(traj[t].x - ref.x, traj[t].y - ref.y, traj[t].z - ref.z);
        }
        out.push_back(total / static_cast<double>(t_count - 1));
    }
    return out;
}

void SyntheticCohortConfig::validate() const {
    auto fail = [](const std::string& what) { throw InputError("synthetic cohort config: " + what); };
    if (n_subjects < 2) fail("n_subjects must be >= 2");
    if (vertex_count < 1) fail("vertex_count must be >= 1");
    if (frame_count < 2) fail("frame_count must be >= 2");
    if (!(event_fraction_target > 0.0 && event_fraction_target < 1.0)) {
        fail("event_fraction_target must lie in (0, 1)");
    }
    if (!(signal_strength >= 0.0) || !std::isfinite(signal_strength)) fail("signal_strength must be >= 0");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail("noise_sd must be >= 0");
    if (!(signal_vertex_fraction >= 0.0 && signal_vertex_fraction <= 1.0)) {
        fail("signal_vertex_fraction must lie in [0, 1]");
    }
    if (!(volumetric_correlation >= -1.0 && volumetric_correlation <= 1.0)) {
        fail("volumetric_correlation must lie in [-1, 1]");
    }
    if (!(baseline_hazard_per_day > 0.0) || !std::isfinite(baseline_hazard_per_day)) {
        fail("baseline_hazard_per_day must be > 0");
    }
    if (!std::isfinite(motion_coupling) || !std::isfinite(base_amplitude)) fail("non-finite shape parameter");
}

namespace {

// Vertices on an ellipsoid laid out along a golden-angle spiral from the top
// cap down, so the leading indices form one contiguous region.
std::vector<Vec3> template_mesh(std::size_t v_count) {
    constexpr double rx = 20.0, ry = 15.0, rz = 35.0;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Vec3> mesh(v_count);
    for (std::size_t v = 0; v < v_count; ++v) {
        const double zf = 1.0 - (static_cast<double>(v) + 0.5) / static_cast<double>(v_count) * 2.0;
        const double ring = std::sqrt(std::max(0.0, 1.0 - zf * zf));
        const double theta = golden * static_cast<double>(v);
        mesh[v] = {rx * ring * std::cos(theta), ry * ring * std::sin(theta), rz * zf};
    }
    return mesh;
}

double realized_event_fraction(const std::vector<double>& event_times,
                               const std::vector<double>& censor_draws, double window) {
    std::size_t events = 0;
    for (std::size_t i = 0; i < event_times.size(); ++i) {
        if (event_times[i] <= window * censor_draws[i]) ++events;
    }
    return static_cast<double>(events) / static_cast<double>(event_times.size());
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& config) {
    config.validate();
    const std::size_t n = config.n_subjects;
    const std::size_t v_count = config.vertex_count;
    const std::size_t t_count = config.frame_count;

    const auto mesh = template_mesh(v_count);
    const auto n_signal = static_cast<std::size_t>(
        std::ceil(config.signal_vertex_fraction * static_cast<double>(v_count)));

    SyntheticCohort cohort;
    cohort.samples.resize(n);
    cohort.planted_risk.resize(n);
    cohort.volumetric.resize(static_cast<Eigen::Index>(n), 3);
    cohort.volumetric_names = {"rvedv", "rvesv", "rvef"};
    for (std::size_t v = 0; v < n_signal; ++v) cohort.signal_vertices.push_back(v);

    std::vector<double> event_times(n);
    std::vector<double> censor_draws(n);
    const double rho = config.volumetric_correlation;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    for (std::size_t i = 0; i < n; ++i) {
        Engine eng = make_engine(derive_seed(config.seed, hash_name("subject"), i));
        const double risk = standard_normal(eng);
        const double nuisance = standard_normal(eng);
        cohort.planted_risk[i] = risk;

        // Survival and censoring draws come first so they do not depend on V or T.
        const double hazard = config.baseline_hazard_per_day * std::exp(config.signal_strength * risk);
        event_times[i] = -std::log(1.0 - uniform01(eng)) / hazard;
        censor_draws[i] = 1.0 - uniform01(eng);  // (0, 1]

        const double edv_z = rho * risk + rho_c * standard_normal(eng);
        const double ef_z = rho * risk + rho_c * standard_normal(eng);
        const double edv = 150.0 + 30.0 * edv_z;
        const double ef = 0.50 - 0.08 * ef_z;
        const auto row = static_cast<Eigen::Index>(i);
        cohort.volumetric(row, 0) = edv;
        cohort.volumetric(row, 1) = edv * (1.0 - ef);
        cohort.volumetric(row, 2) = ef;

        const Vec3 offset{5.0 * standard_normal(eng), 5.0 * standard_normal(eng), 5.0 * standard_normal(eng)};

        MotionSample& sample = cohort.samples[i];
        sample.subject_id = "S" + std::to_string(i + 1);
        sample.trajectories.resize(v_count);
        for (std::size_t v = 0; v < v_count; ++v) {
            const double factor = v < n_signal ? risk : nuisance;
            const double amplitude = config.base_amplitude * std::exp(-config.motion_coupling * factor) +
                                     config.noise_sd * standard_normal(eng);
            const Vec3& base = mesh[v];
            const double norm = std::max(1e-12, std::hypot(base.x, base.y, base.z));
            const Vec3 inward{-base.x / norm, -base.y / norm, -base.z / norm};
            auto& traj = sample.trajectories[v];
            traj.resize(t_count);
            for (std::size_t t = 0; t < t_count; ++t) {
                const double phase = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(t) /
                                                           static_cast<double>(t_count)));
                const double jitter = 0.1 * config.noise_sd;
                traj[t] = {base.x + offset.x + amplitude * phase * inward.x + jitter * standard_normal(eng),
                           base.y + offset.y + amplitude * phase * inward.y + jitter * standard_normal(eng),
                           base.z + offset.z + amplitude * phase * inward.z + jitter * standard_normal(eng)};
            }
        }
    }

    // Smallest window whose realized event fraction reaches the target.
    double lo = 0.0;
    double hi = 1.0;
    while (realized_event_fraction(event_times, censor_draws, hi) < config.event_fraction_target) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (realized_event_fraction(event_times, censor_draws, mid) >= config.event_fraction_target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    cohort.censoring_window_days = hi;

    cohort.outcomes.resize(n);
    std::size_t events = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double censor_time = hi * censor_draws[i];
        SurvivalRecord& rec = cohort.outcomes[i];
        rec.subject_id = cohort.samples[i].subject_id;
        rec.event = event_times[i] <= censor_time ? 1 : 0;
        rec.time = rec.event == 1 ? event_times[i] : censor_time;
        events += static_cast<std::size_t>(rec.event);
    }
    cohort.realized_event_fraction = static_cast<double>(events) / static_cast<double>(n);
    return cohort;
}

}  // namespace motionsurv
